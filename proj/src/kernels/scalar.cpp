#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace synthct::kernels::scalar {

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

Moments centered_moments(const double* a, const double* b, std::size_t n, double mean_a,
                         double mean_b) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    m.sum_ab += da * db;
    m.sum_aa += da * da;
    m.sum_bb += db * db;
  }
  return m;
}

double sum_min(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::min(a[i], b[i]);
  return s;
}

void add_into(double* acc, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void window_u8(const double* v, std::size_t n, double lo, double width, std::uint8_t* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double t = (v[i] - lo) / width * 255.0;
    t = std::min(std::max(t, 0.0), 255.0);
    // t >= 0 here, so half-away-from-zero is floor plus a carry on frac >= 0.5.
    const double f = std::floor(t);
    const double g = f + ((t - f) >= 0.5 ? 1.0 : 0.0);
    out[i] = static_cast<std::uint8_t>(g);
  }
}

void bin_index(const double* v, std::size_t n, double lo, double hi, int n_bins,
               std::int32_t* out) {
  const double span = hi - lo;
  const double nb = static_cast<double>(n_bins);
  const double top = nb - 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = std::floor((v[i] - lo) / span * nb);
    f = std::min(std::max(f, 0.0), top);
    out[i] = static_cast<std::int32_t>(f);
  }
}

void butterfly(std::complex<double>* a, std::complex<double>* b, const std::complex<double>* w,
               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double wr = w[i].real(), wi = w[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    const double tr = wr * br - wi * bi;
    const double ti = wr * bi + wi * br;
    const double ar = a[i].real(), ai = a[i].imag();
    a[i] = {ar + tr, ai + ti};
    b[i] = {ar - tr, ai - ti};
  }
}

void rotate_pairs(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

}  // namespace synthct::kernels::scalar

namespace synthct::kernels {

const KernelTable kScalarTable = {
    Backend::Scalar,       scalar::sum,       scalar::centered_moments, scalar::sum_min,
    scalar::add_into,      scalar::axpy,      scalar::window_u8,        scalar::bin_index,
    scalar::butterfly,     scalar::rotate_pairs,
};

}  // namespace synthct::kernels
