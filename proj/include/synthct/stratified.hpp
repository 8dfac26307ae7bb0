#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthct/frechet.hpp"
#include "synthct/histogram.hpp"
#include "synthct/imaging.hpp"

namespace synthct {

enum class Metric { FID, KL256, KL3, HistCorr, HistInter, SpectCorr };
inline constexpr std::array kAllMetrics{Metric::FID,      Metric::KL256,     Metric::KL3,
                                        Metric::HistCorr, Metric::HistInter, Metric::SpectCorr};

std::string_view metric_name(Metric m) noexcept;
/// Throws MalformedInput for unknown names.
Metric parse_metric(std::string_view name);

struct EvalConfig {
  int n_bins = 256;
  std::array<double, 2> hu_range{-1024.0, 3071.0};  // range of the fine histogram
  TissueBinning tissue;
  int min_slices = 5;
  std::uint64_t seed = 0;  // recorded only; evaluation itself is deterministic
  unsigned threads = 1;    // not part of the snapshot, results do not depend on it

  void validate() const;
  nlohmann::json snapshot() const;
};

/// Feature matrices for the two sides. Rows are looked up by slice id.
struct FeaturePair {
  const FeatureMatrix* real = nullptr;
  const FeatureMatrix* synth = nullptr;
};

struct LayerScore {
  LayerId layer;
  Metric metric;
  double raw = 0.0;
  std::optional<double> normalized;
};

struct LayerCounts {
  LayerId layer;
  int n_real = 0;
  int n_synth = 0;
};

struct SkippedLayer {
  LayerId layer;
  int n_real = 0;
  int n_synth = 0;
  std::string reason;
};

struct MetricAverage {
  double raw = 0.0;
  std::optional<double> baseline;
  std::optional<double> normalized;  // raw / baseline
  int layers = 0;
};

/// Baseline scores from comparing two disjoint real subsets, keyed by layer
/// and metric.
struct BaselineTable {
  std::string set_holdout;
  std::string set_rest;
  std::map<std::pair<int, Metric>, double> entries;
  std::vector<SkippedLayer> skipped;
  nlohmann::json config;  // snapshot of the run that produced it

  std::optional<double> find(LayerId layer, Metric m) const;
  /// Throws DegenerateBaseline naming the first zero entry.
  void require_nonzero() const;
};

nlohmann::json baseline_to_json(const BaselineTable& b);
BaselineTable baseline_from_json(const nlohmann::json& j);
BaselineTable load_baseline(const std::filesystem::path& path);
void save_baseline(const BaselineTable& b, const std::filesystem::path& path);

struct EvaluationReport {
  std::string set_real;
  std::string set_synth;
  nlohmann::json config;                       // snapshot including grid and extractor
  std::vector<LayerCounts> layers;             // scored layers, ascending
  std::vector<LayerScore> scores;              // layer order, then metric order
  std::vector<SkippedLayer> skipped;
  std::map<Metric, MetricAverage> averages;
  std::vector<Metric> metrics;                 // metrics evaluated, in kAllMetrics order

  std::optional<LayerScore> score(LayerId layer, Metric m) const;
};

/// Splits a set by whole volumes with a seeded shuffle: the first
/// round(fraction * volumes) go to the holdout. Layer assignment is kept.
std::pair<ImageSet, ImageSet> split_holdout(const ImageSet& set, double fraction, std::uint64_t seed);

/// Scores every layer between the two real subsets (rest plays the real side,
/// holdout the synthetic side, so features->real must cover real_rest and
/// features->synth real_holdout; pass one matrix twice for a split set).
/// Throws DegenerateBaseline when an entry is 0.
BaselineTable compute_baseline(const ImageSet& real_holdout, const ImageSet& real_rest,
                               const EvalConfig& config, const FeaturePair* features = nullptr);

/// Layer-wise metrics between a real and a synthetic set, normalized by the
/// baseline when one is given. Layers with fewer than min_slices on either
/// side, or absent from the baseline, are skipped and listed.
EvaluationReport evaluate_sets(const ImageSet& real, const ImageSet& synth, const EvalConfig& config,
                               const BaselineTable* baseline = nullptr, const FeaturePair* features = nullptr);

nlohmann::json report_to_json(const EvaluationReport& r);

/// One line chart per metric: x = layer, y = normalized score (raw when no
/// baseline was used), one series per report.
std::string render_metric_chart(Metric m, std::span<const EvaluationReport> reports);

/// Writes report.json, scores.csv and <metric>.svg for each evaluated metric.
void export_report(const EvaluationReport& r, const std::filesystem::path& dir);

}  // namespace synthct
