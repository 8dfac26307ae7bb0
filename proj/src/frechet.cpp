#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/frechet.hpp"
#include "synthct/kernels.hpp"

namespace synthct {
namespace {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

template <typename T>
T read_le(const std::vector<char>& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof v);
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

}  // namespace

FeatureMatrix load_features(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + where);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 4 + 8 + 8;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), "FEAT", 4) != 0)
    throw Error(ErrorKind::MalformedInput, where + ": bad magic (expected FEAT)");
  const auto version = read_le<std::uint32_t>(bytes, 4);
  if (version != 1)
    throw Error(ErrorKind::MalformedInput, where + ": unsupported version " + std::to_string(version));
  FeatureMatrix f;
  f.n = read_le<std::uint64_t>(bytes, 8);
  f.d = read_le<std::uint64_t>(bytes, 16);
  if (f.n == 0 || f.d == 0) throw Error(ErrorKind::MalformedInput, where + ": empty feature matrix");
  if (f.d > (bytes.size() - kHeader) / 4 || f.n > (bytes.size() - kHeader) / 4 / f.d ||
      bytes.size() - kHeader != f.n * f.d * 4)
    throw Error(ErrorKind::MalformedInput, where + ": payload length does not match n*d");
  f.data.resize(f.n * f.d);
  std::memcpy(f.data.data(), bytes.data() + kHeader, f.data.size() * sizeof(float));
  for (float x : f.data)
    if (!std::isfinite(x)) throw Error(ErrorKind::MalformedInput, where + ": non-finite feature value");

  const auto side = sidecar(path);
  std::ifstream sin(side);
  if (!sin) throw Error(ErrorKind::MalformedInput, where + ": missing sidecar " + side.string());
  try {
    const auto j = nlohmann::json::parse(sin);
    f.ids = j.at("ids").get<std::vector<std::string>>();
    f.extractor_desc = j.value("extractor_desc", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, side.string() + ": " + e.what());
  }
  if (f.ids.size() != f.n)
    throw Error(ErrorKind::MalformedInput, side.string() + ": field 'ids' must have n entries");
  return f;
}

void save_features(const FeatureMatrix& f, const std::filesystem::path& path) {
  if (f.data.size() != f.n * f.d || f.ids.size() != f.n)
    throw Error(ErrorKind::InvalidParameter, "feature matrix shape is inconsistent");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out.write("FEAT", 4);
    write_le<std::uint32_t>(out, 1);
    write_le<std::uint64_t>(out, f.n);
    write_le<std::uint64_t>(out, f.d);
    out.write(reinterpret_cast<const char*>(f.data.data()),
              static_cast<std::streamsize>(f.data.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  }
  nlohmann::json j;
  j["ids"] = f.ids;
  if (!f.extractor_desc.empty()) j["extractor_desc"] = f.extractor_desc;
  std::ofstream side(sidecar(path), std::ios::trunc);
  if (!side) throw Error(ErrorKind::IoError, "cannot write " + sidecar(path).string());
  side << j.dump(2) << '\n';
}

FeatureMatrix merge_features(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidParameter, "nothing to merge");
  FeatureMatrix out;
  out.d = parts.front().d;
  std::set<std::string> seen;
  for (const auto& p : parts) {
    if (p.d != out.d) throw Error(ErrorKind::MalformedInput, "feature files have different dimensions");
    for (const auto& id : p.ids)
      if (!seen.insert(id).second) throw Error(ErrorKind::MalformedInput, "duplicate feature id " + id);
    out.n += p.n;
    out.data.insert(out.data.end(), p.data.begin(), p.data.end());
    out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
    if (out.extractor_desc.empty())
      out.extractor_desc = p.extractor_desc;
    else if (p.extractor_desc != out.extractor_desc && out.extractor_desc.find(p.extractor_desc) == std::string::npos)
      out.extractor_desc += " | " + p.extractor_desc;
  }
  return out;
}

GaussianSummary fit_gaussian(const FeatureMatrix& f, std::span<const std::size_t> rows) {
  const std::size_t n = rows.size();
  if (n < 2)
    throw Error(ErrorKind::InsufficientSamples,
                "Gaussian fit needs at least 2 samples (got " + std::to_string(n) + ")");
  const std::size_t d = f.d;
  GaussianSummary g{std::vector<double>(d, 0.0), Matrix(d, d)};
  std::vector<double> x(d);
  for (auto r : rows) {
    const auto src = f.row(r);
    for (std::size_t j = 0; j < d; ++j) x[j] = src[j];
    kernels::add_into(g.mean, x);
  }
  for (double& m : g.mean) m /= static_cast<double>(n);
  for (auto r : rows) {
    const auto src = f.row(r);
    for (std::size_t j = 0; j < d; ++j) x[j] = src[j] - g.mean[j];
    for (std::size_t i = 0; i < d; ++i)
      if (x[i] != 0.0) kernels::axpy(x[i], x, g.cov.row(i));
  }
  const double denom = static_cast<double>(n - 1);
  Matrix cov(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) cov(i, j) = g.cov(i, j) / denom;
  g.cov = cov.symmetrized();
  return g;
}

GaussianSummary fit_gaussian(const FeatureMatrix& f) {
  std::vector<std::size_t> rows(f.n);
  std::iota(rows.begin(), rows.end(), 0);
  return fit_gaussian(f, rows);
}

Matrix sqrt_spd(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw Error(ErrorKind::InvalidParameter, "sqrt_spd needs a non-empty square matrix");
  if (a.asymmetry() > 1e-10) throw Error(ErrorKind::InvalidParameter, "sqrt_spd input is not symmetric");
  const SymmetricEigen eig = eigen_symmetric(a);
  const double tol = 1e-6 * std::abs(a.trace());
  const std::size_t n = a.rows();
  std::vector<double> roots(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (eig.values[k] < -tol)
      throw Error(ErrorKind::NotPositiveSemidefinite,
                  "eigenvalue " + std::to_string(eig.values[k]) + " below -1e-6 * trace");
    roots[k] = std::sqrt(std::max(eig.values[k], 0.0));
  }
  // S = V diag(sqrt(lambda)) V^T
  Matrix scaled(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < n; ++k) scaled(r, k) = eig.vectors(r, k) * roots[k];
  return (scaled * eig.vectors.transposed()).symmetrized();
}

double trace_sqrt_product(const Matrix& c1, const Matrix& c2) {
  const Matrix s1 = sqrt_spd(c1);
  const Matrix inner = (s1 * c2 * s1).symmetrized();
  const SymmetricEigen eig = eigen_symmetric(inner);
  const double tol = 1e-6 * std::abs(inner.trace());
  double t = 0.0;
  for (double lambda : eig.values) {
    if (lambda < -tol)
      throw Error(ErrorKind::NotPositiveSemidefinite, "cross-covariance term is indefinite");
    t += std::sqrt(std::max(lambda, 0.0));
  }
  return t;
}

double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2, double eps) {
  const std::size_t d = g1.mean.size();
  if (g2.mean.size() != d || g1.cov.rows() != d || g2.cov.rows() != d)
    throw Error(ErrorKind::InvalidParameter, "Gaussian summaries have different dimensions");
  if (eps < 0.0) throw Error(ErrorKind::InvalidParameter, "eps must be non-negative");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = g1.mean[i] - g2.mean[i];
    mean_term += diff * diff;
  }
  double cross;
  try {
    cross = trace_sqrt_product(g1.cov, g2.cov);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotPositiveSemidefinite || eps == 0.0) throw;
    const Matrix offset = Matrix::diagonal(std::vector<double>(d, eps));
    cross = trace_sqrt_product(g1.cov + offset, g2.cov + offset);
  }
  const double dist = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * cross;
  return std::max(dist, 0.0);
}

double fid_between_sets(const FeatureMatrix& real_features, const FeatureMatrix& synth_features) {
  if (real_features.d != synth_features.d)
    throw Error(ErrorKind::InvalidParameter, "feature dimensions differ");
  return frechet_distance(fit_gaussian(real_features), fit_gaussian(synth_features));
}

}  // namespace synthct
