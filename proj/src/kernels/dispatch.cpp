#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "synthct/error.hpp"

namespace synthct::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if SYNTHCT_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* best_table() noexcept {
  if (const char* env = std::getenv("SYNTHCT_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &kScalarTable;
    if (want == "avx2" && backend_supported(Backend::Avx2)) return kernel_table(Backend::Avx2);
    if (want == "neon" && backend_supported(Backend::Neon)) return kernel_table(Backend::Neon);
  }
  if (backend_supported(Backend::Avx2)) return kernel_table(Backend::Avx2);
  if (backend_supported(Backend::Neon)) return kernel_table(Backend::Neon);
  return &kScalarTable;
}

std::atomic<const KernelTable*>& active() noexcept {
  static std::atomic<const KernelTable*> table{best_table()};
  return table;
}

const KernelTable& k() noexcept { return *active().load(std::memory_order_relaxed); }

}  // namespace

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend b) noexcept { return kernel_table(b) != nullptr; }

const KernelTable* kernel_table(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return &kScalarTable;
    case Backend::Avx2:
#if SYNTHCT_HAVE_AVX2_KERNELS
      return cpu_has_avx2() ? &kAvx2Table : nullptr;
#else
      return nullptr;
#endif
    case Backend::Neon:
#if SYNTHCT_HAVE_NEON_KERNELS
      return &kNeonTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Backend active_backend() noexcept { return k().backend; }

void set_backend(Backend b) {
  const KernelTable* t = kernel_table(b);
  if (t == nullptr)
    throw Error(ErrorKind::InvalidParameter,
                "SIMD backend '" + std::string(backend_name(b)) + "' is not available");
  active().store(t, std::memory_order_relaxed);
}

namespace {

void require_same(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::InvalidParameter, "kernel operands differ in length");
}

}  // namespace

double sum(std::span<const double> x) { return k().sum(x.data(), x.size()); }

Moments centered_moments(std::span<const double> a, std::span<const double> b, double mean_a,
                         double mean_b) {
  require_same(a.size(), b.size());
  return k().centered_moments(a.data(), b.data(), a.size(), mean_a, mean_b);
}

double sum_min(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size());
  return k().sum_min(a.data(), b.data(), a.size());
}

void add_into(std::span<double> acc, std::span<const double> x) {
  require_same(acc.size(), x.size());
  k().add_into(acc.data(), x.data(), acc.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size());
  k().axpy(alpha, x.data(), y.data(), y.size());
}

void window_u8(std::span<const double> v, double lo, double width, std::span<std::uint8_t> out) {
  require_same(v.size(), out.size());
  k().window_u8(v.data(), v.size(), lo, width, out.data());
}

void bin_index(std::span<const double> v, double lo, double hi, int n_bins,
               std::span<std::int32_t> out) {
  require_same(v.size(), out.size());
  k().bin_index(v.data(), v.size(), lo, hi, n_bins, out.data());
}

void butterfly(std::span<std::complex<double>> a, std::span<std::complex<double>> b,
               std::span<const std::complex<double>> w) {
  require_same(a.size(), b.size());
  require_same(a.size(), w.size());
  k().butterfly(a.data(), b.data(), w.data(), a.size());
}

void rotate_pairs(std::span<double> x, std::span<double> y, double c, double s) {
  require_same(x.size(), y.size());
  k().rotate_pairs(x.data(), y.data(), x.size(), c, s);
}

}  // namespace synthct::kernels
