#include <cmath>
#include <fstream>
#include <random>

#include "phantom.hpp"
#include "synthct/survey_stats.hpp"
#include "test_util.hpp"

using namespace synthct;

namespace {

// Q(a, x) = Gamma(a)^-1 * integral_x^inf t^(a-1) e^-t dt by composite Simpson.
double q_by_integration(double a, double x) {
  const double len = 80.0 + 4.0 * a;
  const int n = 400000;
  const double h = len / n;
  const double lg = std::lgamma(a);
  auto f = [&](double t) { return std::exp((a - 1.0) * std::log(t) - t - lg); };
  double s = f(x) + f(x + len);
  for (int i = 1; i < n; ++i) s += f(x + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

SurveyRecord rec(Truth t, Judgment j, const std::string& item = "i") {
  SurveyRecord r;
  r.survey_id = "s";
  r.rater_id = "r";
  r.item_id = item;
  r.truth = t;
  r.judgment = j;
  return r;
}

std::vector<SurveyRecord> repeat(Truth t, Judgment j, int n) { return std::vector<SurveyRecord>(n, rec(t, j)); }

ContingencyTable table(std::vector<std::vector<std::uint64_t>> counts) {
  ContingencyTable t;
  for (std::size_t i = 0; i < counts.size(); ++i) t.row_labels.push_back("r" + std::to_string(i));
  for (std::size_t j = 0; j < counts[0].size(); ++j) t.col_labels.push_back("c" + std::to_string(j));
  t.counts = std::move(counts);
  return t;
}

}  // namespace

TEST_CASE("regularized_gamma_q against numerical integration") {
  for (double a : {0.5, 1.0, 1.5, 2.0, 5.0, 12.5}) {
    for (double x : {0.05, 0.5, 1.0, 3.0, 6.0, 10.0, 25.0}) {
      CAPTURE(a);
      CAPTURE(x);
      const double oracle = q_by_integration(a, x);
      CHECK(std::abs(regularized_gamma_q(a, x) - oracle) <= 1e-10 * std::max(oracle, 1e-300) + 1e-15);
    }
  }
  CHECK(regularized_gamma_q(2.0, 0.0) == 1.0);
  // Q(1, x) = e^-x exactly.
  for (double x : {0.3, 2.0, 9.0, 40.0}) CHECK(regularized_gamma_q(1.0, x) == doctest::Approx(std::exp(-x)).epsilon(1e-12));
  CHECK_THROWS_KIND(regularized_gamma_q(0.0, 1.0), ErrorKind::InvalidParameter);
  CHECK_THROWS_KIND(regularized_gamma_q(1.0, -1.0), ErrorKind::InvalidParameter);
}

TEST_CASE("chi-squared examples") {
  const ChiSquaredResult even = chi_squared_test(table({{5, 5}, {5, 5}}));
  CHECK(even.statistic == 0.0);
  CHECK(even.dof == 1);
  CHECK(even.p_value == 1.0);

  const ChiSquaredResult r = chi_squared_test(table({{10, 20}, {20, 10}}));
  // Every expected count is 15, so X^2 = 4 * 25 / 15.
  CHECK(std::abs(r.statistic - 20.0 / 3.0) <= 1e-12);
  CHECK(r.dof == 1);
  CHECK(std::abs(r.p_value - q_by_integration(0.5, 10.0 / 3.0)) <= 1e-10);
  CHECK(std::abs(r.p_value - 0.00982) <= 1e-5);

  // Yates: (|O - E| - 0.5)^2 / E summed = 4 * 20.25 / 15.
  const ChiSquaredResult y = chi_squared_test(table({{10, 20}, {20, 10}}), true);
  CHECK(y.statistic == doctest::Approx(5.4).epsilon(1e-12));
  // Yates is ignored beyond 2x2.
  const auto big = table({{10, 20, 5}, {20, 10, 5}});
  CHECK(chi_squared_test(big, true).statistic == chi_squared_test(big).statistic);
  CHECK(chi_squared_test(big).dof == 2);

  CHECK_THROWS_KIND(chi_squared_test(table({{0, 0}, {5, 5}})), ErrorKind::DegenerateTable);
  CHECK_THROWS_KIND(chi_squared_test(table({{1, 2}})), ErrorKind::DegenerateTable);
}

TEST_CASE("chi-squared invariants") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(1, 40);
  for (int t = 0; t < 50; ++t) {
    const int r = 2 + t % 3, c = 2 + (t / 3) % 3;
    std::vector<std::vector<std::uint64_t>> counts(r, std::vector<std::uint64_t>(c));
    for (auto& row : counts)
      for (auto& x : row) x = u(rng);
    const ChiSquaredResult base = chi_squared_test(table(counts));
    CHECK(base.statistic >= 0.0);
    CHECK(base.dof == (r - 1) * (c - 1));

    auto rows = counts;
    std::reverse(rows.begin(), rows.end());
    const ChiSquaredResult pr = chi_squared_test(table(rows));
    CHECK(pr.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    CHECK(pr.p_value == doctest::Approx(base.p_value).epsilon(1e-10));
    auto cols = counts;
    for (auto& row : cols) std::rotate(row.begin(), row.begin() + 1, row.end());
    const ChiSquaredResult pc = chi_squared_test(table(cols));
    CHECK(pc.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    CHECK(pc.p_value == doctest::Approx(base.p_value).epsilon(1e-10));

    for (std::uint64_t k : {2, 3, 10}) {
      auto scaled = counts;
      for (auto& row : scaled)
        for (auto& x : row) x *= k;
      CHECK(chi_squared_test(table(scaled)).statistic == doctest::Approx(k * base.statistic).epsilon(1e-12));
    }
  }
  // p falls as the statistic grows at fixed dof.
  double last = 1.0;
  for (std::uint64_t d = 0; d <= 10; ++d) {
    const double p = chi_squared_test(table({{10 + d, 10 - d}, {10 - d, 10 + d}})).p_value;
    CHECK(p <= last);
    last = p;
  }
}

TEST_CASE("accuracy_breakdown") {
  std::vector<SurveyRecord> all_right = repeat(Truth::Real, Judgment::Real, 3);
  auto more = repeat(Truth::Synthetic, Judgment::Synthetic, 4);
  all_right.insert(all_right.end(), more.begin(), more.end());
  const AccuracyBreakdown a = accuracy_breakdown(all_right);
  CHECK(a.full == 100.0);
  CHECK(*a.real_only == 100.0);
  CHECK(*a.synth_only == 100.0);

  std::vector<SurveyRecord> says_real = repeat(Truth::Real, Judgment::Real, 10);
  more = repeat(Truth::Synthetic, Judgment::Real, 10);
  says_real.insert(says_real.end(), more.begin(), more.end());
  const AccuracyBreakdown b = accuracy_breakdown(says_real);
  CHECK(b.full == 50.0);
  CHECK(*b.real_only == 100.0);
  CHECK(*b.synth_only == 0.0);

  // Indeterminable counts as wrong, and the excluding variant drops it.
  std::vector<SurveyRecord> mixed = repeat(Truth::Real, Judgment::Real, 2);
  mixed.push_back(rec(Truth::Real, Judgment::Indeterminable));
  const AccuracyBreakdown c = accuracy_breakdown(mixed);
  CHECK(c.full == 66.7);
  CHECK(*c.full_excl == 100.0);
  CHECK(c.n_indeterminable == 1);
  CHECK_FALSE(c.synth_only.has_value());

  CHECK_THROWS_KIND(accuracy_breakdown(std::span<const SurveyRecord>{}), ErrorKind::InvalidParameter);

  // Reported full-set percentage is the count-weighted mean of the exact
  // subset rates up to its own rounding.
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    std::vector<SurveyRecord> rs;
    const int n = 2 + static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i)
      rs.push_back(rec(rng() % 2 ? Truth::Real : Truth::Synthetic, judgment_from_code(static_cast<int>(rng() % 3))));
    const AccuracyBreakdown x = accuracy_breakdown(rs);
    double nr = 0, ns = 0, cr = 0, cs = 0;
    for (const auto& r : rs) (r.truth == Truth::Real ? nr : ns) += 1, (r.truth == Truth::Real ? cr : cs) += r.correct();
    const double rate_r = nr ? 100.0 * cr / nr : 0.0, rate_s = ns ? 100.0 * cs / ns : 0.0;
    CHECK(std::abs(x.full - (rate_r * nr + rate_s * ns) / n) <= 0.05 + 1e-9);
    if (nr) CHECK(std::abs(*x.real_only - rate_r) <= 0.05 + 1e-9);
    if (ns) CHECK(std::abs(*x.synth_only - rate_s) <= 0.05 + 1e-9);
  }
}

TEST_CASE("round_to_tenth") {
  CHECK(round_to_tenth(51.75) == 51.8);
  CHECK(round_to_tenth(49.04) == 49.0);
  CHECK(round_to_tenth(100.0 * 2 / 3) == 66.7);
  CHECK(round_to_tenth(0.05) == 0.1);
}

TEST_CASE("build_table") {
  const auto a = repeat(Truth::Real, Judgment::Real, 10);
  const auto b = repeat(Truth::Synthetic, Judgment::Synthetic, 10);
  const ContingencyTable t = build_table(a, b, TableMode::Binomial);
  CHECK(t.col_labels == std::vector<std::string>{"0", "1"});
  CHECK(t.counts == std::vector<std::vector<std::uint64_t>>{{0, 10}, {10, 0}});

  auto a3 = a;
  for (int i = 0; i < 3; ++i) a3[i].judgment = Judgment::Indeterminable;
  const ContingencyTable m = build_table(a3, b, TableMode::Multinomial);
  CHECK(m.col_labels == std::vector<std::string>{"0", "1", "2"});
  CHECK(m.counts[0][2] == 3);
  CHECK(m.counts[1][2] == 0);
  // Without indeterminable answers, the multinomial column 2 is dropped.
  CHECK(build_table(a, b, TableMode::Multinomial).col_labels.size() == 2);

  const auto lost = repeat(Truth::Real, Judgment::Indeterminable, 4);
  CHECK_THROWS_KIND(build_table(lost, b, TableMode::Binomial), ErrorKind::DegenerateTable);
  // A single surviving column is degenerate as well.
  CHECK_THROWS_KIND(build_table(a, a, TableMode::Binomial), ErrorKind::DegenerateTable);
  CHECK_THROWS_KIND(build_table(std::span<const SurveyRecord>{}, b, TableMode::Binomial), ErrorKind::InvalidParameter);
}

TEST_CASE("judgment codes and names") {
  CHECK(static_cast<int>(parse_judgment("indeterminable")) == 2);
  CHECK(static_cast<int>(parse_judgment("real")) == 1);
  CHECK(static_cast<int>(parse_judgment("synthetic")) == 0);
  CHECK_THROWS_KIND(parse_judgment("maybe"), ErrorKind::MalformedInput);
  CHECK_THROWS_KIND(judgment_from_code(3), ErrorKind::MalformedInput);
  CHECK_THROWS_KIND(parse_truth("fake"), ErrorKind::MalformedInput);
}

TEST_CASE("four surveys give eleven comparisons in each mode") {
  std::mt19937_64 rng(12);
  std::vector<SurveyLog> logs;
  for (int s = 1; s <= 4; ++s) {
    SurveyLog log{"Survey " + std::to_string(s), {}};
    for (int i = 0; i < 40; ++i)
      log.records.push_back(
          rec(i % 2 ? Truth::Real : Truth::Synthetic, judgment_from_code(static_cast<int>(rng() % 3))));
    logs.push_back(log);
  }
  const auto tests = survey_comparisons(logs);
  CHECK(tests.size() == 22);
  CHECK(tests[0].label == "Survey 1: real vs synthetic");
  CHECK(tests[8].label == "All surveys: real vs synthetic");
  CHECK(tests[10].label == "Survey 1 vs Survey 2");
  CHECK(tests.back().label == "Survey 3 vs Survey 4");

  TestOutcome fake{"Survey 2: real vs synthetic", TableMode::Binomial, ChiSquaredResult{4.9, 1, 0.0269}, ""};
  CHECK(format_test_line(fake) == "Survey 2: real vs synthetic, binomial → 0.027");

  const auto j = survey_stats_json(logs);
  CHECK(j["accuracy"]["columns"] ==
        nlohmann::json::array({"Full scan set", "Real scans only", "Synthetic scans only"}));
  CHECK(j["accuracy"]["surveys"].size() == 4);
  CHECK(j["accuracy"]["surveys"][0]["values"].size() == 3);
  CHECK(j["tests"].size() == 22);
  for (const auto& t : j["tests"]) {
    CHECK(t.contains("label"));
    CHECK(t.contains("mode"));
    CHECK(t.contains("statistic"));
    CHECK(t.contains("dof"));
    CHECK(t.contains("p_value"));
  }
}

TEST_CASE("degenerate comparisons are reported, not fatal") {
  SurveyLog log{"Survey 1", repeat(Truth::Real, Judgment::Real, 5)};
  auto syn = repeat(Truth::Synthetic, Judgment::Real, 5);
  log.records.insert(log.records.end(), syn.begin(), syn.end());
  const auto tests = survey_comparisons(std::span(&log, 1));
  REQUIRE(tests.size() == 2);
  CHECK_FALSE(tests[0].result.has_value());
  CHECK_FALSE(tests[0].error.empty());
  const auto j = survey_stats_json(std::span(&log, 1));
  CHECK(j["tests"][0]["p_value"].is_null());
}

TEST_CASE("read_response_log joins truth") {
  synthct::testing::TempDir dir("log");
  std::ofstream(dir / "truth.json") << R"({"s-000": "real", "s-001": "synthetic"})";
  std::ofstream(dir / "r.jsonl")
      << R"({"survey_id":"s","rater_id":"a","item_id":"s-000","judgment":1,"rationale":null,"ts":"t"})" "\n"
      << R"({"survey_id":"s","rater_id":"a","item_id":"s-001","judgment":2,"rationale":"blurry","ts":"t"})" "\n";
  const auto rs = read_response_log(dir / "r.jsonl", dir / "truth.json");
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].correct());
  CHECK(rs[1].judgment == Judgment::Indeterminable);
  CHECK(rs[1].truth == Truth::Synthetic);
  CHECK(rs[1].rationale == "blurry");

  std::ofstream(dir / "bad.jsonl") << R"({"survey_id":"s","rater_id":"a","item_id":"s-009","judgment":1})" "\n";
  CHECK_THROWS_KIND(read_response_log(dir / "bad.jsonl", dir / "truth.json"), ErrorKind::MalformedInput);
  std::ofstream(dir / "bad2.jsonl") << "{not json\n";
  CHECK_THROWS_KIND(read_response_log(dir / "bad2.jsonl", dir / "truth.json"), ErrorKind::MalformedInput);
}
