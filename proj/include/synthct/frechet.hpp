#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synthct/linalg.hpp"

namespace synthct {

/// n x d embedding matrix, one row per image. Row i belongs to ids[i].
struct FeatureMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> data;  // row-major
  std::vector<std::string> ids;
  std::string extractor_desc;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
};

/// Binary little-endian feature file: "FEAT", u32 version = 1, u64 n, u64 d,
/// n*d float32 row-major. The sidecar `<path>.json` holds {"ids": [...]} with
/// n entries and optionally "extractor_desc".
FeatureMatrix load_features(const std::filesystem::path& path);
void save_features(const FeatureMatrix& f, const std::filesystem::path& path);

/// Row-wise concatenation of matrices with equal d. Duplicate ids or mixed
/// dimensions throw MalformedInput. Extractor descriptions are joined when
/// they differ.
FeatureMatrix merge_features(std::span<const FeatureMatrix> parts);

struct GaussianSummary {
  std::vector<double> mean;
  Matrix cov;
};

/// Column means and unbiased (n-1) covariance, symmetrized. Throws
/// InsufficientSamples for n < 2.
GaussianSummary fit_gaussian(const FeatureMatrix& f);
/// Same, restricted to the listed rows.
GaussianSummary fit_gaussian(const FeatureMatrix& f, std::span<const std::size_t> rows);

/// Principal square root of a symmetric PSD matrix via eigendecomposition,
/// negative eigenvalues clamped to zero. Throws InvalidParameter when the input
/// is not symmetric to 1e-10 relative and NotPositiveSemidefinite when an
/// eigenvalue lies below -1e-6 * trace.
Matrix sqrt_spd(const Matrix& a);

/// Tr((C1^1/2 C2 C1^1/2)^1/2), which equals Tr((C1 C2)^1/2).
double trace_sqrt_product(const Matrix& c1, const Matrix& c2);

/// ||m1 - m2||^2 + Tr(C1) + Tr(C2) - 2 Tr((C1^1/2 C2 C1^1/2)^1/2), clamped at 0.
/// When the cross term is numerically indefinite, eps is added to both
/// covariance diagonals before taking the root.
double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2, double eps = 1e-6);

double fid_between_sets(const FeatureMatrix& real_features, const FeatureMatrix& synth_features);

}  // namespace synthct
