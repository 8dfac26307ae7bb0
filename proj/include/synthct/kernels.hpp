#pragma once

// Data-parallel inner loops shared by the metric modules.
//
// Every kernel has a scalar reference implementation and, where the target
// allows, AVX2 (x86-64) and NEON (AArch64) variants. The active backend is
// chosen once at startup from the CPU features and may be overridden with
// SYNTHCT_SIMD=scalar|avx2|neon or set_backend().
//
// Element-wise kernels (window_u8, bin_index, add_into, axpy, butterfly,
// rotate_pairs) produce bit-identical output on every backend. Reductions
// (sum, centered_moments, sum_min) use lane-wise partial sums and agree with
// the scalar reference to rounding.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace synthct::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct Moments {
  double sum_ab = 0.0;
  double sum_aa = 0.0;
  double sum_bb = 0.0;
};

struct KernelTable {
  Backend backend;
  double (*sum)(const double* x, std::size_t n);
  Moments (*centered_moments)(const double* a, const double* b, std::size_t n, double mean_a,
                              double mean_b);
  double (*sum_min)(const double* a, const double* b, std::size_t n);
  void (*add_into)(double* acc, const double* x, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*window_u8)(const double* v, std::size_t n, double lo, double width, std::uint8_t* out);
  void (*bin_index)(const double* v, std::size_t n, double lo, double hi, int n_bins,
                    std::int32_t* out);
  void (*butterfly)(std::complex<double>* a, std::complex<double>* b,
                    const std::complex<double>* w, std::size_t n);
  void (*rotate_pairs)(double* x, double* y, std::size_t n, double c, double s);
};

std::string_view backend_name(Backend b) noexcept;
bool backend_supported(Backend b) noexcept;

/// Table for a specific backend, or nullptr when it is not compiled in or the
/// CPU lacks the instructions.
const KernelTable* kernel_table(Backend b) noexcept;

Backend active_backend() noexcept;
/// Throws synthct::Error(InvalidParameter) for an unsupported backend.
void set_backend(Backend b);

double sum(std::span<const double> x);
Moments centered_moments(std::span<const double> a, std::span<const double> b, double mean_a,
                         double mean_b);
double sum_min(std::span<const double> a, std::span<const double> b);
void add_into(std::span<double> acc, std::span<const double> x);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// clamp(round_half_away((v - lo) / width * 255), 0, 255)
void window_u8(std::span<const double> v, double lo, double width, std::span<std::uint8_t> out);

/// clamp(floor((v - lo) / (hi - lo) * n_bins), 0, n_bins - 1)
void bin_index(std::span<const double> v, double lo, double hi, int n_bins,
               std::span<std::int32_t> out);

/// Radix-2 butterfly over paired spans: t = w*b; a <- a + t; b <- a - t.
void butterfly(std::span<std::complex<double>> a, std::span<std::complex<double>> b,
               std::span<const std::complex<double>> w);

/// Plane rotation: x <- c*x - s*y, y <- s*x + c*y.
void rotate_pairs(std::span<double> x, std::span<double> y, double c, double s);

}  // namespace synthct::kernels
