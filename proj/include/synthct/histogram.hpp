#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "synthct/imaging.hpp"

namespace synthct {

/// Binned intensity distribution. `density` is counts / sum(counts) for a
/// single image; for averaged histograms it is the mean of the input densities.
struct Histogram {
  int n_bins = 0;
  std::vector<double> edges;  // n_bins + 1, strictly increasing
  std::vector<std::uint64_t> counts;
  std::vector<double> density;

  /// Validates edges/counts and fills density. Throws InvalidParameter.
  static Histogram from_counts(std::vector<double> edges, std::vector<std::uint64_t> counts);
  std::uint64_t total() const noexcept;
};

bool same_binning(const Histogram& a, const Histogram& b) noexcept;

/// Uniform bins over [lo, hi]; v maps to clamp(floor((v-lo)/(hi-lo)*n), 0, n-1).
Histogram image_histogram(const SliceImage& slice, int n_bins, double lo, double hi);

/// Density = mean of input densities, counts = element-wise sum.
Histogram average_histogram(std::span<const Histogram> hists);

/// Three radio-opacity classes over [hu_lo, t1), [t1, t2), [t2, hu_hi]:
/// gas and fluid, soft tissue, bone.
struct TissueBinning {
  double t1 = -200.0;
  double t2 = 200.0;
  double hu_lo = -1024.0;
  double hu_hi = 3071.0;

  void validate() const;
};

/// CT only; throws InvalidParameter for MR slices.
Histogram tissue_histogram(const SliceImage& slice, const TissueBinning& binning);

/// KL divergence in nats between the densities of p and q, after adding
/// epsilon to every bin and renormalizing.
double kl_divergence(const Histogram& p, const Histogram& q, double epsilon = 1e-12);

/// Pearson correlation of the two density vectors.
double hist_correlation(const Histogram& h1, const Histogram& h2);

/// Sum over bins of min(density1, density2).
double hist_intersection(const Histogram& h1, const Histogram& h2);

/// Pearson correlation of two equal-length vectors; throws
/// DegenerateDistribution when either is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// {n_bins, edges, counts}; density is recomputed on load.
nlohmann::json histogram_to_json(const Histogram& h);
Histogram histogram_from_json(const nlohmann::json& j);

}  // namespace synthct
