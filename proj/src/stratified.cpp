#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "synthct/error.hpp"
#include "synthct/mean.hpp"
#include "synthct/parallel.hpp"
#include "synthct/random.hpp"
#include "synthct/spectral.hpp"
#include "synthct/stratified.hpp"

namespace synthct {
namespace {

using nlohmann::json;

constexpr double kZeroBaseline = 1e-12;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Everything one side of one layer contributes to the metrics.
struct SideSummary {
  int n = 0;
  Histogram fine;
  Histogram tissue;
  Spectrum spectrum;
  std::vector<std::size_t> feature_rows;
};

using RowIndex = std::unordered_map<std::string, std::size_t>;

RowIndex index_rows(const FeatureMatrix& f) {
  RowIndex idx;
  for (std::size_t i = 0; i < f.ids.size(); ++i) idx.emplace(f.ids[i], i);
  return idx;
}

SideSummary summarize(const std::vector<const SliceImage*>& slices, const EvalConfig& cfg, int pad_rows,
                      int pad_cols, const RowIndex* rows) {
  SideSummary s;
  s.n = static_cast<int>(slices.size());
  std::vector<Histogram> fine, tissue;
  fine.reserve(slices.size());
  tissue.reserve(slices.size());
  MeanAccumulator spectrum;
  for (const SliceImage* slice : slices) {
    fine.push_back(image_histogram(*slice, cfg.n_bins, cfg.hu_range[0], cfg.hu_range[1]));
    tissue.push_back(tissue_histogram(*slice, cfg.tissue));
    // Streamed in slice order; same arithmetic as average_spectrum.
    spectrum.add(to_spectrum(*slice, pad_rows, pad_cols).values);
    if (rows) {
      auto it = rows->find(slice->id());
      if (it == rows->end()) throw Error(ErrorKind::MissingFeature, "no feature row for slice " + slice->id());
      s.feature_rows.push_back(it->second);
    }
  }
  s.spectrum = {pad_rows, pad_cols, spectrum.mean()};
  s.fine = average_histogram(fine);
  s.tissue = average_histogram(tissue);
  return s;
}

struct LayerOutcome {
  int n_real = 0;
  int n_synth = 0;
  bool scored = false;
  std::map<Metric, double> raw;
};

struct Scored {
  std::array<LayerOutcome, LayerId::kCount> layers;
  std::vector<Metric> metrics;
  int pad_rows = 0;
  int pad_cols = 0;
  std::string extractor_desc;
};

void require_ct(const ImageSet& set) {
  for (const SliceImage* s : set.all_slices())
    if (s->modality != Modality::CT)
      throw Error(ErrorKind::InvalidParameter, "set " + set.set_id() + " contains non-CT slice " + s->id());
}

// Raw per-layer metrics between `real` and `synth`. Layers run in parallel
// into fixed slots, so the result is independent of the thread count.
Scored score_layers(const ImageSet& real, const ImageSet& synth, const EvalConfig& cfg,
                    const FeaturePair* features) {
  cfg.validate();
  if (!real.layers_assigned() || !synth.layers_assigned())
    throw Error(ErrorKind::InvalidParameter, "both sets need layer assignments");
  if (real.contrast_enhanced() != synth.contrast_enhanced())
    throw Error(ErrorKind::InvalidParameter, "contrast-enhanced and non-contrast sets cannot be mixed (" +
                                                 real.set_id() + ", " + synth.set_id() + ")");
  require_ct(real);
  require_ct(synth);

  Scored out;
  const bool with_fid = features != nullptr;
  RowIndex real_rows, synth_rows;
  if (with_fid) {
    if (!features->real || !features->synth)
      throw Error(ErrorKind::InvalidParameter, "feature pair needs both matrices");
    if (features->real->d != features->synth->d)
      throw Error(ErrorKind::InvalidParameter, "feature dimensions differ");
    real_rows = index_rows(*features->real);
    synth_rows = index_rows(*features->synth);
    out.extractor_desc = features->real->extractor_desc;
    if (features->synth->extractor_desc != out.extractor_desc)
      out.extractor_desc += " | " + features->synth->extractor_desc;
  }
  for (Metric m : kAllMetrics)
    if (m != Metric::FID || with_fid) out.metrics.push_back(m);

  int max_rows = 1, max_cols = 1;
  for (const ImageSet* set : {&real, &synth})
    for (const SliceImage* s : set->all_slices()) {
      max_rows = std::max(max_rows, s->rows);
      max_cols = std::max(max_cols, s->cols);
    }
  out.pad_rows = next_power_of_two(max_rows);
  out.pad_cols = next_power_of_two(max_cols);

  parallel_for(LayerId::kCount, cfg.threads, [&](std::size_t i) {
    const LayerId layer(static_cast<int>(i) + 1);
    const auto rs = real.layer_slices(layer);
    const auto ss = synth.layer_slices(layer);
    LayerOutcome& o = out.layers[i];
    o.n_real = static_cast<int>(rs.size());
    o.n_synth = static_cast<int>(ss.size());
    if (o.n_real < cfg.min_slices || o.n_synth < cfg.min_slices) return;
    const SideSummary a = summarize(rs, cfg, out.pad_rows, out.pad_cols, with_fid ? &real_rows : nullptr);
    const SideSummary b = summarize(ss, cfg, out.pad_rows, out.pad_cols, with_fid ? &synth_rows : nullptr);
    if (with_fid)
      o.raw[Metric::FID] = frechet_distance(fit_gaussian(*features->real, a.feature_rows),
                                            fit_gaussian(*features->synth, b.feature_rows));
    o.raw[Metric::KL256] = kl_divergence(a.fine, b.fine);
    o.raw[Metric::KL3] = kl_divergence(a.tissue, b.tissue);
    o.raw[Metric::HistCorr] = hist_correlation(a.fine, b.fine);
    o.raw[Metric::HistInter] = hist_intersection(a.fine, b.fine);
    o.raw[Metric::SpectCorr] = spectrum_correlation(a.spectrum, b.spectrum);
    o.scored = true;
  });
  return out;
}

std::string too_few(const EvalConfig& cfg) {
  return "fewer than " + std::to_string(cfg.min_slices) + " slices on a side";
}

json skipped_to_json(const std::vector<SkippedLayer>& skipped) {
  json arr = json::array();
  for (const auto& s : skipped)
    arr.push_back({{"layer", s.layer.index()}, {"n_real", s.n_real}, {"n_synth", s.n_synth}, {"reason", s.reason}});
  return arr;
}

std::vector<SkippedLayer> skipped_from_json(const json& arr) {
  std::vector<SkippedLayer> out;
  for (const auto& s : arr)
    out.push_back({LayerId(s.at("layer").get<int>()), s.at("n_real").get<int>(), s.at("n_synth").get<int>(),
                   s.at("reason").get<std::string>()});
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::FID: return "FID";
    case Metric::KL256: return "KL256";
    case Metric::KL3: return "KL3";
    case Metric::HistCorr: return "HistCorr";
    case Metric::HistInter: return "HistInter";
    case Metric::SpectCorr: return "SpectCorr";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics)
    if (metric_name(m) == name) return m;
  throw Error(ErrorKind::MalformedInput, "unknown metric '" + std::string(name) + "'");
}

void EvalConfig::validate() const {
  if (n_bins < 1) throw Error(ErrorKind::InvalidParameter, "n_bins must be >= 1");
  if (!(hu_range[0] < hu_range[1])) throw Error(ErrorKind::InvalidParameter, "hu range must be increasing");
  if (min_slices < 2) throw Error(ErrorKind::InvalidParameter, "min_slices must be >= 2");
  tissue.validate();
}

json EvalConfig::snapshot() const {
  return {{"n_bins", n_bins},
          {"hu_range", hu_range},
          {"tissue_thresholds", {tissue.t1, tissue.t2}},
          {"min_slices", min_slices},
          {"kl_epsilon", 1e-12},
          {"seed", seed}};
}

std::optional<double> BaselineTable::find(LayerId layer, Metric m) const {
  auto it = entries.find({layer.index(), m});
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

void BaselineTable::require_nonzero() const {
  for (const auto& [key, v] : entries)
    if (std::abs(v) < kZeroBaseline)
      throw Error(ErrorKind::DegenerateBaseline, "baseline " + std::string(metric_name(key.second)) + " is 0 on layer " +
                                                     std::to_string(key.first));
}

json baseline_to_json(const BaselineTable& b) {
  json layers = json::array();
  std::map<int, json> per_layer;
  for (const auto& [key, v] : b.entries) per_layer[key.first][std::string(metric_name(key.second))] = v;
  for (const auto& [layer, scores] : per_layer) layers.push_back({{"layer", layer}, {"scores", scores}});
  return {{"schema", 1},        {"kind", "baseline"},        {"set_holdout", b.set_holdout},
          {"set_rest", b.set_rest}, {"layers", layers}, {"skipped", skipped_to_json(b.skipped)},
          {"config", b.config}};
}

BaselineTable baseline_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw Error(ErrorKind::MalformedInput, "unsupported baseline schema");
    BaselineTable b;
    b.set_holdout = j.at("set_holdout").get<std::string>();
    b.set_rest = j.at("set_rest").get<std::string>();
    for (const auto& l : j.at("layers")) {
      const int layer = LayerId(l.at("layer").get<int>()).index();
      for (const auto& [name, v] : l.at("scores").items()) b.entries[{layer, parse_metric(name)}] = v.get<double>();
    }
    b.skipped = skipped_from_json(j.value("skipped", json::array()));
    b.config = j.value("config", json::object());
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("baseline JSON: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidParameter) throw Error(ErrorKind::MalformedInput, e.what());
    throw;
  }
}

BaselineTable load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return baseline_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
}

void save_baseline(const BaselineTable& b, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << baseline_to_json(b).dump(2) << '\n';
}

std::optional<LayerScore> EvaluationReport::score(LayerId layer, Metric m) const {
  for (const auto& s : scores)
    if (s.layer == layer && s.metric == m) return s;
  return std::nullopt;
}

std::pair<ImageSet, ImageSet> split_holdout(const ImageSet& set, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::InvalidParameter, "holdout fraction must lie in (0, 1)");
  const std::size_t n = set.volumes().size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n < 2 || k == 0 || k == n)
    throw Error(ErrorKind::InsufficientSamples,
                "set " + set.set_id() + " has too few volumes (" + std::to_string(n) + ") to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  seeded_shuffle(std::span(order), rng);
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(rest.begin(), rest.end());
  return {select_volumes(set, hold, set.set_id() + ":holdout"), select_volumes(set, rest, set.set_id() + ":rest")};
}

BaselineTable compute_baseline(const ImageSet& real_holdout, const ImageSet& real_rest, const EvalConfig& config,
                               const FeaturePair* features) {
  if (real_holdout.provenance() != Provenance::Real || real_rest.provenance() != Provenance::Real)
    throw Error(ErrorKind::InvalidParameter, "baseline sets must both be real");
  // Rest takes the real side so that evaluate_sets(rest, holdout) reproduces
  // these numbers exactly.
  const Scored s = score_layers(real_rest, real_holdout, config, features);

  BaselineTable b;
  b.set_holdout = real_holdout.set_id();
  b.set_rest = real_rest.set_id();
  b.config = config.snapshot();
  b.config["spectrum_grid"] = {s.pad_rows, s.pad_cols};
  b.config["extractor_desc"] = features ? json(s.extractor_desc) : json(nullptr);
  for (int i = 0; i < LayerId::kCount; ++i) {
    const LayerOutcome& o = s.layers[i];
    const LayerId layer(i + 1);
    if (!o.scored) {
      b.skipped.push_back({layer, o.n_real, o.n_synth, too_few(config)});
      continue;
    }
    for (const auto& [m, v] : o.raw) b.entries[{layer.index(), m}] = v;
  }
  b.require_nonzero();
  return b;
}

EvaluationReport evaluate_sets(const ImageSet& real, const ImageSet& synth, const EvalConfig& config,
                               const BaselineTable* baseline, const FeaturePair* features) {
  if (baseline) {
    baseline->require_nonzero();
    if (features && std::none_of(baseline->entries.begin(), baseline->entries.end(),
                                 [](const auto& e) { return e.first.second == Metric::FID; }) &&
        !baseline->entries.empty())
      throw Error(ErrorKind::InvalidParameter, "baseline has no FID entries but features were supplied");
  }
  const Scored s = score_layers(real, synth, config, features);

  EvaluationReport r;
  r.set_real = real.set_id();
  r.set_synth = synth.set_id();
  r.metrics = s.metrics;
  r.config = config.snapshot();
  r.config["spectrum_grid"] = {s.pad_rows, s.pad_cols};
  r.config["extractor_desc"] = features ? json(s.extractor_desc) : json(nullptr);
  r.config["baseline"] = baseline ? json{{"set_holdout", baseline->set_holdout}, {"set_rest", baseline->set_rest}}
                                  : json(nullptr);

  std::map<Metric, std::pair<double, double>> sums;  // raw, baseline
  for (int i = 0; i < LayerId::kCount; ++i) {
    const LayerOutcome& o = s.layers[i];
    const LayerId layer(i + 1);
    if (!o.scored) {
      r.skipped.push_back({layer, o.n_real, o.n_synth, too_few(config)});
      continue;
    }
    if (baseline) {
      bool complete = true;
      for (Metric m : r.metrics) complete = complete && baseline->find(layer, m).has_value();
      if (!complete) {
        r.skipped.push_back({layer, o.n_real, o.n_synth, "layer missing from baseline"});
        continue;
      }
    }
    r.layers.push_back({layer, o.n_real, o.n_synth});
    for (Metric m : r.metrics) {
      LayerScore ls{layer, m, o.raw.at(m), std::nullopt};
      auto& acc = sums[m];
      acc.first += ls.raw;
      if (baseline) {
        const double b = *baseline->find(layer, m);
        ls.normalized = ls.raw / b;
        acc.second += b;
      }
      r.scores.push_back(ls);
    }
  }
  const double n_layers = static_cast<double>(r.layers.size());
  for (const auto& [m, acc] : sums) {
    MetricAverage avg;
    avg.layers = static_cast<int>(r.layers.size());
    avg.raw = acc.first / n_layers;
    if (baseline) {
      avg.baseline = acc.second / n_layers;
      if (std::abs(*avg.baseline) < kZeroBaseline)
        throw Error(ErrorKind::DegenerateBaseline, "average baseline " + std::string(metric_name(m)) + " is 0");
      avg.normalized = avg.raw / *avg.baseline;
    }
    r.averages[m] = avg;
  }
  return r;
}

json report_to_json(const EvaluationReport& r) {
  json layers = json::array();
  for (const auto& lc : r.layers) {
    json scores = json::object();
    for (const auto& s : r.scores)
      if (s.layer == lc.layer)
        scores[std::string(metric_name(s.metric))] = {{"raw", s.raw}, {"normalized", optional_number(s.normalized)}};
    layers.push_back({{"layer", lc.layer.index()}, {"n_real", lc.n_real}, {"n_synth", lc.n_synth}, {"scores", scores}});
  }
  json averages = json::object();
  for (const auto& [m, a] : r.averages)
    averages[std::string(metric_name(m))] = {{"raw", a.raw},
                                             {"baseline", optional_number(a.baseline)},
                                             {"normalized", optional_number(a.normalized)},
                                             {"layers", a.layers}};
  json metrics = json::array();
  for (Metric m : r.metrics) metrics.push_back(std::string(metric_name(m)));
  return {{"schema", 1},         {"set_real", r.set_real}, {"set_synth", r.set_synth}, {"config", r.config},
          {"metrics", metrics},  {"layers", layers},       {"skipped", skipped_to_json(r.skipped)},
          {"averages", averages}};
}

std::string render_metric_chart(Metric m, std::span<const EvaluationReport> reports) {
  constexpr double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  bool normalized = !reports.empty();
  double vmax = 0.0, vmin = 0.0;
  for (const auto& r : reports)
    for (const auto& s : r.scores)
      if (s.metric == m) {
        normalized = normalized && s.normalized.has_value();
      }
  auto value_of = [&](const LayerScore& s) { return normalized ? *s.normalized : s.raw; };
  for (const auto& r : reports)
    for (const auto& s : r.scores)
      if (s.metric == m) {
        vmax = std::max(vmax, value_of(s));
        vmin = std::min(vmin, value_of(s));
      }
  const double y_max = vmax > 0.0 ? vmax * 1.1 : 1.0;
  const double y_min = vmin < 0.0 ? vmin * 1.1 : 0.0;
  auto x_of = [&](int layer) { return left + pw * (layer - 1) / (LayerId::kCount - 1); };
  auto y_of = [&](double v) { return top + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

  const std::string name(metric_name(m));
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" data-metric=\"" << name
    << "\" data-y-min=\"" << fmt17(y_min) << "\" data-y-max=\"" << fmt17(y_max) << "\" data-scale=\""
    << (normalized ? "normalized" : "raw") << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" << name
    << (normalized ? " (normalized)" : " (raw)") << "</text>\n";
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  o << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int l = 1; l <= LayerId::kCount; ++l)
    o << "<text x=\"" << fmt6(x_of(l)) << "\" y=\"" << fmt6(top + ph + 16) << "\" text-anchor=\"middle\">" << l
      << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y_min + (y_max - y_min) * t / 4;
    o << "<text x=\"" << fmt6(left - 6) << "\" y=\"" << fmt6(y_of(v) + 4) << "\" text-anchor=\"end\" data-tick=\""
      << fmt17(v) << "\">" << fmt6(v) << "</text>\n";
  }
  o << "<text x=\"" << fmt6(left + pw / 2) << "\" y=\"" << fmt6(H - 10) << "\" text-anchor=\"middle\">axial layer</text>\n";
  o << "</g>\n";

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const char* color = kColors[i % std::size(kColors)];
    o << "<g data-series=\"" << r.set_real << " vs " << r.set_synth << "\" stroke=\"" << color << "\" fill=\"" << color
      << "\">\n";
    std::string points;
    for (const auto& s : r.scores)
      if (s.metric == m) {
        if (!points.empty()) points += ' ';
        points += fmt6(x_of(s.layer.index())) + "," + fmt6(y_of(value_of(s)));
      }
    o << "<polyline fill=\"none\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    for (const auto& s : r.scores)
      if (s.metric == m)
        o << "<circle r=\"3\" cx=\"" << fmt6(x_of(s.layer.index())) << "\" cy=\"" << fmt6(y_of(value_of(s)))
          << "\" data-layer=\"" << s.layer.index() << "\" data-value=\"" << fmt17(value_of(s)) << "\"/>\n";
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void export_report(const EvaluationReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << body;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  };
  write("report.json", report_to_json(r).dump(2) + "\n");

  std::string csv = "layer,metric,raw,normalized,n_real,n_synth\n";
  for (const auto& lc : r.layers)
    for (const auto& s : r.scores)
      if (s.layer == lc.layer)
        csv += std::to_string(lc.layer.index()) + "," + std::string(metric_name(s.metric)) + "," + fmt17(s.raw) + "," +
               (s.normalized ? fmt17(*s.normalized) : std::string()) + "," + std::to_string(lc.n_real) + "," +
               std::to_string(lc.n_synth) + "\n";
  write("scores.csv", csv);

  for (Metric m : r.metrics) write(std::string(metric_name(m)) + ".svg", render_metric_chart(m, std::span(&r, 1)));
}

}  // namespace synthct
