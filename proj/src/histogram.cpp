#include <algorithm>
#include <cmath>

#include "synthct/error.hpp"
#include "synthct/histogram.hpp"
#include "synthct/kernels.hpp"
#include "synthct/mean.hpp"

namespace synthct {
namespace {

void require_same_binning(const Histogram& a, const Histogram& b) {
  if (!same_binning(a, b))
    throw Error(ErrorKind::InvalidParameter, "histograms have different binning");
}

std::vector<double> smoothed(const std::vector<double>& density, double epsilon) {
  std::vector<double> out(density.size());
  double total = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    out[i] = density[i] + epsilon;
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

Histogram Histogram::from_counts(std::vector<double> edges, std::vector<std::uint64_t> counts) {
  if (counts.empty()) throw Error(ErrorKind::InvalidParameter, "histogram needs at least one bin");
  if (edges.size() != counts.size() + 1)
    throw Error(ErrorKind::InvalidParameter, "histogram needs n_bins + 1 edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw Error(ErrorKind::InvalidParameter, "histogram edges must be strictly increasing");
  Histogram h;
  h.n_bins = static_cast<int>(counts.size());
  h.edges = std::move(edges);
  h.counts = std::move(counts);
  h.density.assign(h.counts.size(), 0.0);
  const std::uint64_t total = h.total();
  if (total > 0)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      h.density[i] = static_cast<double>(h.counts[i]) / static_cast<double>(total);
  return h;
}

std::uint64_t Histogram::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

bool same_binning(const Histogram& a, const Histogram& b) noexcept {
  return a.n_bins == b.n_bins && a.edges == b.edges;
}

Histogram image_histogram(const SliceImage& slice, int n_bins, double lo, double hi) {
  if (n_bins < 1) throw Error(ErrorKind::InvalidParameter, "n_bins must be >= 1");
  if (!(lo < hi)) throw Error(ErrorKind::InvalidParameter, "histogram range must satisfy lo < hi");
  if (slice.values.empty()) throw Error(ErrorKind::InvalidParameter, "empty slice " + slice.id());
  std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) edges[i] = lo + (hi - lo) * i / n_bins;
  edges.back() = hi;

  std::vector<std::int32_t> bins(slice.values.size());
  kernels::bin_index(slice.values, lo, hi, n_bins, bins);
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_bins), 0);
  for (auto b : bins) ++counts[static_cast<std::size_t>(b)];
  return Histogram::from_counts(std::move(edges), std::move(counts));
}

Histogram average_histogram(std::span<const Histogram> hists) {
  if (hists.empty()) throw Error(ErrorKind::InvalidParameter, "cannot average an empty histogram list");
  Histogram out = hists.front();
  std::fill(out.counts.begin(), out.counts.end(), 0);
  MeanAccumulator mean;
  for (const auto& h : hists) {
    require_same_binning(out, h);
    mean.add(h.density);
    for (std::size_t i = 0; i < h.counts.size(); ++i) out.counts[i] += h.counts[i];
  }
  out.density = mean.mean();
  return out;
}

void TissueBinning::validate() const {
  if (!(hu_lo < t1 && t1 < t2 && t2 < hu_hi))
    throw Error(ErrorKind::InvalidParameter, "tissue thresholds must satisfy hu_lo < t1 < t2 < hu_hi");
}

Histogram tissue_histogram(const SliceImage& slice, const TissueBinning& binning) {
  binning.validate();
  if (slice.modality != Modality::CT)
    throw Error(ErrorKind::InvalidParameter, "tissue histogram needs a CT slice (got " +
                                                 std::string(modality_name(slice.modality)) + ")");
  if (slice.values.empty()) throw Error(ErrorKind::InvalidParameter, "empty slice " + slice.id());
  std::vector<std::uint64_t> counts(3, 0);
  for (double v : slice.values) {
    if (v < binning.t1)
      ++counts[0];
    else if (v < binning.t2)
      ++counts[1];
    else
      ++counts[2];
  }
  return Histogram::from_counts({binning.hu_lo, binning.t1, binning.t2, binning.hu_hi}, std::move(counts));
}

double kl_divergence(const Histogram& p, const Histogram& q, double epsilon) {
  require_same_binning(p, q);
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidParameter, "KL epsilon must be positive");
  const auto ps = smoothed(p.density, epsilon);
  const auto qs = smoothed(q.density, epsilon);
  double d = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) d += ps[i] * std::log(ps[i] / qs[i]);
  return d;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorKind::InvalidParameter, "correlation needs two non-empty vectors of equal length");
  auto constant = [](std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
  };
  if (constant(a) || constant(b))
    throw Error(ErrorKind::DegenerateDistribution, "correlation undefined for a constant vector");
  const double n = static_cast<double>(a.size());
  const double mean_a = kernels::sum(a) / n;
  const double mean_b = kernels::sum(b) / n;
  const kernels::Moments m = kernels::centered_moments(a, b, mean_a, mean_b);
  if (!(m.sum_aa > 0.0) || !(m.sum_bb > 0.0))
    throw Error(ErrorKind::DegenerateDistribution, "correlation undefined for zero variance");
  const double r = m.sum_ab / std::sqrt(m.sum_aa * m.sum_bb);
  return std::clamp(r, -1.0, 1.0);
}

double hist_correlation(const Histogram& h1, const Histogram& h2) {
  require_same_binning(h1, h2);
  return pearson(h1.density, h2.density);
}

double hist_intersection(const Histogram& h1, const Histogram& h2) {
  require_same_binning(h1, h2);
  return kernels::sum_min(h1.density, h2.density);
}

nlohmann::json histogram_to_json(const Histogram& h) {
  return {{"n_bins", h.n_bins}, {"edges", h.edges}, {"counts", h.counts}};
}

Histogram histogram_from_json(const nlohmann::json& j) {
  try {
    auto h = Histogram::from_counts(j.at("edges").get<std::vector<double>>(),
                                    j.at("counts").get<std::vector<std::uint64_t>>());
    if (h.n_bins != j.at("n_bins").get<int>())
      throw Error(ErrorKind::MalformedInput, "histogram n_bins disagrees with counts");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("histogram JSON: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidParameter) throw Error(ErrorKind::MalformedInput, e.what());
    throw;
  }
}

}  // namespace synthct
