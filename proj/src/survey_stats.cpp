#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "synthct/error.hpp"
#include "synthct/survey_stats.hpp"

namespace synthct {
namespace {

using nlohmann::json;

std::optional<double> percent(std::size_t correct, std::size_t total) {
  if (total == 0) return std::nullopt;
  return round_to_tenth(100.0 * static_cast<double>(correct) / static_cast<double>(total));
}

// Series expansion, good for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction, good for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<SurveyRecord> with_truth(std::span<const SurveyRecord> records, Truth t) {
  std::vector<SurveyRecord> out;
  for (const auto& r : records)
    if (r.truth == t) out.push_back(r);
  return out;
}

void add_test(std::vector<TestOutcome>& out, const std::string& label, std::span<const SurveyRecord> a,
              std::span<const SurveyRecord> b, const std::string& la, const std::string& lb, bool yates) {
  for (TableMode mode : {TableMode::Binomial, TableMode::Multinomial}) {
    TestOutcome t{label, mode, std::nullopt, {}};
    try {
      t.result = chi_squared_test(build_table(a, b, mode, la, lb), yates);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateTable && e.kind() != ErrorKind::InvalidParameter) throw;
      t.error = e.what();
    }
    out.push_back(std::move(t));
  }
}

}  // namespace

std::string_view truth_name(Truth t) noexcept { return t == Truth::Real ? "real" : "synthetic"; }

Truth parse_truth(std::string_view s) {
  if (s == "real") return Truth::Real;
  if (s == "synthetic") return Truth::Synthetic;
  throw Error(ErrorKind::MalformedInput, "truth must be 'real' or 'synthetic', got '" + std::string(s) + "'");
}

std::string_view judgment_name(Judgment j) noexcept {
  switch (j) {
    case Judgment::Synthetic: return "synthetic";
    case Judgment::Real: return "real";
    case Judgment::Indeterminable: return "indeterminable";
  }
  return "?";
}

Judgment parse_judgment(std::string_view s) {
  if (s == "synthetic") return Judgment::Synthetic;
  if (s == "real") return Judgment::Real;
  if (s == "indeterminable") return Judgment::Indeterminable;
  throw Error(ErrorKind::MalformedInput, "judgment must be real, synthetic or indeterminable, got '" +
                                             std::string(s) + "'");
}

Judgment judgment_from_code(int code) {
  if (code < 0 || code > 2) throw Error(ErrorKind::MalformedInput, "judgment code " + std::to_string(code));
  return static_cast<Judgment>(code);
}

double round_to_tenth(double v) noexcept { return std::round(v * 10.0) / 10.0; }

AccuracyBreakdown accuracy_breakdown(std::span<const SurveyRecord> records) {
  if (records.empty()) throw Error(ErrorKind::InvalidParameter, "accuracy needs at least one record");
  // [grouping][0 = all, 1 = excluding indeterminable]
  std::size_t correct[3] = {0, 0, 0}, total[3][2] = {{0, 0}, {0, 0}, {0, 0}};
  std::size_t indeterminable = 0;
  for (const auto& r : records) {
    const int g = r.truth == Truth::Real ? 1 : 2;
    const bool ind = r.judgment == Judgment::Indeterminable;
    indeterminable += ind;
    for (int k : {0, g}) {
      correct[k] += r.correct();
      ++total[k][0];
      total[k][1] += !ind;
    }
  }
  AccuracyBreakdown a;
  a.full = *percent(correct[0], total[0][0]);
  a.real_only = percent(correct[1], total[1][0]);
  a.synth_only = percent(correct[2], total[2][0]);
  a.full_excl = percent(correct[0], total[0][1]);
  a.real_only_excl = percent(correct[1], total[1][1]);
  a.synth_only_excl = percent(correct[2], total[2][1]);
  a.n_records = records.size();
  a.n_indeterminable = indeterminable;
  return a;
}

std::string_view table_mode_name(TableMode m) noexcept {
  return m == TableMode::Binomial ? "binomial" : "multinomial";
}

ContingencyTable build_table(std::span<const SurveyRecord> a, std::span<const SurveyRecord> b, TableMode mode,
                             std::string label_a, std::string label_b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidParameter, "contingency table needs two non-empty series");
  const int n_cols = mode == TableMode::Binomial ? 2 : 3;
  std::vector<std::vector<std::uint64_t>> full(2, std::vector<std::uint64_t>(n_cols, 0));
  for (int row = 0; row < 2; ++row)
    for (const auto& r : row == 0 ? a : b) {
      const int code = static_cast<int>(r.judgment);
      if (code < n_cols) ++full[row][code];
    }
  ContingencyTable t;
  t.row_labels = {std::move(label_a), std::move(label_b)};
  t.counts.assign(2, {});
  for (int c = 0; c < n_cols; ++c) {
    if (full[0][c] + full[1][c] == 0) continue;
    t.col_labels.push_back(std::to_string(c));
    for (int row = 0; row < 2; ++row) t.counts[row].push_back(full[row][c]);
  }
  for (int row = 0; row < 2; ++row) {
    std::uint64_t sum = 0;
    for (auto v : t.counts[row]) sum += v;
    if (sum == 0)
      throw Error(ErrorKind::DegenerateTable, "series '" + t.row_labels[row] + "' is empty in " +
                                                  std::string(table_mode_name(mode)) + " mode");
  }
  if (t.col_labels.size() < 2)
    throw Error(ErrorKind::DegenerateTable, "only one answer category remains in " +
                                                std::string(table_mode_name(mode)) + " mode");
  return t;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw Error(ErrorKind::InvalidParameter, "Q(a, x) needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

ChiSquaredResult chi_squared_test(const ContingencyTable& t, bool yates) {
  const std::size_t r = t.counts.size();
  const std::size_t c = r ? t.counts[0].size() : 0;
  if (r < 2 || c < 2) throw Error(ErrorKind::DegenerateTable, "chi-squared needs at least a 2x2 table");
  std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (t.counts[i].size() != c) throw Error(ErrorKind::InvalidParameter, "ragged contingency table");
    for (std::size_t j = 0; j < c; ++j) {
      const auto o = static_cast<double>(t.counts[i][j]);
      row_sum[i] += o;
      col_sum[j] += o;
      total += o;
    }
  }
  const bool correct = yates && r == 2 && c == 2;
  double stat = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double e = row_sum[i] * col_sum[j] / total;
      if (!(e > 0.0))
        throw Error(ErrorKind::DegenerateTable, "expected count is zero at (" + std::to_string(i) + ", " +
                                                    std::to_string(j) + ")");
      double dev = std::abs(static_cast<double>(t.counts[i][j]) - e);
      if (correct) dev = std::max(0.0, dev - 0.5);
      stat += dev * dev / e;
    }
  ChiSquaredResult res;
  res.statistic = stat;
  res.dof = static_cast<int>((r - 1) * (c - 1));
  res.p_value = std::clamp(regularized_gamma_q(res.dof / 2.0, stat / 2.0), 0.0, 1.0);
  return res;
}

std::vector<TestOutcome> survey_comparisons(std::span<const SurveyLog> logs, bool yates) {
  std::vector<TestOutcome> out;
  for (const auto& log : logs)
    add_test(out, log.label + ": real vs synthetic", with_truth(log.records, Truth::Real),
             with_truth(log.records, Truth::Synthetic), "real", "synthetic", yates);
  if (logs.size() >= 2) {
    std::vector<SurveyRecord> all;
    for (const auto& log : logs) all.insert(all.end(), log.records.begin(), log.records.end());
    add_test(out, "All surveys: real vs synthetic", with_truth(all, Truth::Real), with_truth(all, Truth::Synthetic),
             "real", "synthetic", yates);
    for (std::size_t i = 0; i < logs.size(); ++i)
      for (std::size_t j = i + 1; j < logs.size(); ++j)
        add_test(out, logs[i].label + " vs " + logs[j].label, logs[i].records, logs[j].records, logs[i].label,
                 logs[j].label, yates);
  }
  return out;
}

std::string format_test_line(const TestOutcome& t) {
  std::string line = t.label + ", " + std::string(table_mode_name(t.mode)) + " → ";
  if (!t.result) return line + "n/a (" + t.error + ")";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t.result->p_value);
  return line + buf;
}

json survey_stats_json(std::span<const SurveyLog> logs, bool yates) {
  json surveys = json::array();
  for (const auto& log : logs) {
    json entry{{"label", log.label}, {"n_records", log.records.size()}};
    if (log.records.empty()) {
      entry["values"] = json::array({nullptr, nullptr, nullptr});
      entry["excluding_indeterminable"] = json::array({nullptr, nullptr, nullptr});
      entry["n_indeterminable"] = 0;
    } else {
      const auto a = accuracy_breakdown(log.records);
      entry["values"] = {a.full, optional_number(a.real_only), optional_number(a.synth_only)};
      entry["excluding_indeterminable"] = {optional_number(a.full_excl), optional_number(a.real_only_excl),
                                           optional_number(a.synth_only_excl)};
      entry["n_indeterminable"] = a.n_indeterminable;
    }
    surveys.push_back(std::move(entry));
  }
  json tests = json::array();
  for (const auto& t : survey_comparisons(logs, yates)) {
    json entry{{"label", t.label}, {"mode", table_mode_name(t.mode)}};
    if (t.result) {
      entry["statistic"] = t.result->statistic;
      entry["dof"] = t.result->dof;
      entry["p_value"] = t.result->p_value;
    } else {
      entry["statistic"] = nullptr;
      entry["dof"] = nullptr;
      entry["p_value"] = nullptr;
      entry["error"] = t.error;
    }
    tests.push_back(std::move(entry));
  }
  return {{"accuracy",
           {{"columns", kAccuracyColumns},
            {"indeterminable", "counted as incorrect; excluding_indeterminable drops them from the denominators"},
            {"surveys", surveys}}},
          {"tests", tests},
          {"yates", yates},
          {"decision_rule", "none applied; p-values are reported without a significance threshold"}};
}

std::vector<SurveyRecord> read_response_log(const std::filesystem::path& log, const std::filesystem::path& truth) {
  std::ifstream tin(truth);
  if (!tin) throw Error(ErrorKind::IoError, "cannot open " + truth.string());
  std::map<std::string, Truth> truth_map;
  try {
    const json doc = json::parse(tin);
    for (const auto& [item, t] : doc.items()) truth_map[item] = parse_truth(t.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, truth.string() + ": " + e.what());
  }
  std::ifstream in(log);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + log.string());
  std::vector<SurveyRecord> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const std::string where = log.string() + ":" + std::to_string(n);
    try {
      const json j = json::parse(line);
      SurveyRecord r;
      r.survey_id = j.at("survey_id").get<std::string>();
      r.rater_id = j.at("rater_id").get<std::string>();
      r.item_id = j.at("item_id").get<std::string>();
      r.judgment = judgment_from_code(j.at("judgment").get<int>());
      if (j.contains("rationale") && j["rationale"].is_string()) r.rationale = j["rationale"].get<std::string>();
      if (j.contains("ts") && j["ts"].is_string()) r.timestamp = j["ts"].get<std::string>();
      auto it = truth_map.find(r.item_id);
      if (it == truth_map.end()) throw Error(ErrorKind::MalformedInput, where + ": unknown item " + r.item_id);
      r.truth = it->second;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedInput, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace synthct
