#include "kernels_internal.hpp"

#if SYNTHCT_HAVE_AVX2_KERNELS

#include <immintrin.h>

#define SYNTHCT_AVX2 __attribute__((target("avx2")))

namespace synthct::kernels::avx2 {
namespace {

SYNTHCT_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

SYNTHCT_AVX2 double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

SYNTHCT_AVX2 Moments centered_moments(const double* a, const double* b, std::size_t n,
                                      double mean_a, double mean_b) {
  const __m256d ma = _mm256_set1_pd(mean_a);
  const __m256d mb = _mm256_set1_pd(mean_b);
  __m256d ab = _mm256_setzero_pd(), aa = _mm256_setzero_pd(), bb = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d da = _mm256_sub_pd(_mm256_loadu_pd(a + i), ma);
    const __m256d db = _mm256_sub_pd(_mm256_loadu_pd(b + i), mb);
    ab = _mm256_add_pd(ab, _mm256_mul_pd(da, db));
    aa = _mm256_add_pd(aa, _mm256_mul_pd(da, da));
    bb = _mm256_add_pd(bb, _mm256_mul_pd(db, db));
  }
  Moments m{hsum(ab), hsum(aa), hsum(bb)};
  for (; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    m.sum_ab += da * db;
    m.sum_aa += da * da;
    m.sum_bb += db * db;
  }
  return m;
}

SYNTHCT_AVX2 double sum_min(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_min_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double s = hsum(acc);
  for (; i < n; ++i) s += (b[i] < a[i]) ? b[i] : a[i];
  return s;
}

SYNTHCT_AVX2 void add_into(double* acc, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) acc[i] += x[i];
}

SYNTHCT_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

SYNTHCT_AVX2 void window_u8(const double* v, std::size_t n, double lo, double width,
                            std::uint8_t* out) {
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vw = _mm256_set1_pd(width);
  const __m256d k255 = _mm256_set1_pd(255.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  alignas(16) std::int32_t lanes[4];
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(_mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(v + i), vlo), vw), k255);
    t = _mm256_min_pd(_mm256_max_pd(t, zero), k255);
    const __m256d f = _mm256_floor_pd(t);
    const __m256d carry = _mm256_and_pd(_mm256_cmp_pd(_mm256_sub_pd(t, f), half, _CMP_GE_OQ), one);
    _mm_store_si128(reinterpret_cast<__m128i*>(lanes), _mm256_cvttpd_epi32(_mm256_add_pd(f, carry)));
    for (int k = 0; k < 4; ++k) out[i + k] = static_cast<std::uint8_t>(lanes[k]);
  }
  for (; i < n; ++i) {
    double t = (v[i] - lo) / width * 255.0;
    t = t < 0.0 ? 0.0 : t;
    t = t > 255.0 ? 255.0 : t;
    const double f = __builtin_floor(t);
    out[i] = static_cast<std::uint8_t>(f + ((t - f) >= 0.5 ? 1.0 : 0.0));
  }
}

SYNTHCT_AVX2 void bin_index(const double* v, std::size_t n, double lo, double hi, int n_bins,
                            std::int32_t* out) {
  const double span = hi - lo;
  const double nb = static_cast<double>(n_bins);
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vspan = _mm256_set1_pd(span);
  const __m256d vnb = _mm256_set1_pd(nb);
  const __m256d top = _mm256_set1_pd(nb - 1.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d f = _mm256_floor_pd(
        _mm256_mul_pd(_mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(v + i), vlo), vspan), vnb));
    f = _mm256_min_pd(_mm256_max_pd(f, zero), top);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), _mm256_cvttpd_epi32(f));
  }
  for (; i < n; ++i) {
    double f = __builtin_floor((v[i] - lo) / span * nb);
    f = f < 0.0 ? 0.0 : f;
    f = f > nb - 1.0 ? nb - 1.0 : f;
    out[i] = static_cast<std::int32_t>(f);
  }
}

SYNTHCT_AVX2 void butterfly(std::complex<double>* a, std::complex<double>* b,
                            const std::complex<double>* w, std::size_t n) {
  // std::complex<double> is layout-compatible with double[2].
  double* pa = reinterpret_cast<double*>(a);
  double* pb = reinterpret_cast<double*>(b);
  const double* pw = reinterpret_cast<const double*>(w);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vb = _mm256_loadu_pd(pb + 2 * i);
    const __m256d vw = _mm256_loadu_pd(pw + 2 * i);
    const __m256d wr = _mm256_movedup_pd(vw);
    const __m256d wi = _mm256_permute_pd(vw, 0xF);
    const __m256d bswap = _mm256_permute_pd(vb, 0x5);
    // [wr*br - wi*bi, wr*bi + wi*br]
    const __m256d t = _mm256_addsub_pd(_mm256_mul_pd(wr, vb), _mm256_mul_pd(wi, bswap));
    const __m256d va = _mm256_loadu_pd(pa + 2 * i);
    _mm256_storeu_pd(pa + 2 * i, _mm256_add_pd(va, t));
    _mm256_storeu_pd(pb + 2 * i, _mm256_sub_pd(va, t));
  }
  for (; i < n; ++i) {
    const double wr = pw[2 * i], wi = pw[2 * i + 1];
    const double br = pb[2 * i], bi = pb[2 * i + 1];
    const double tr = wr * br - wi * bi;
    const double ti = wr * bi + wi * br;
    const double ar = pa[2 * i], ai = pa[2 * i + 1];
    pa[2 * i] = ar + tr;
    pa[2 * i + 1] = ai + ti;
    pb[2 * i] = ar - tr;
    pb[2 * i + 1] = ai - ti;
  }
}

SYNTHCT_AVX2 void rotate_pairs(double* x, double* y, std::size_t n, double c, double s) {
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xi = _mm256_loadu_pd(x + i);
    const __m256d yi = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(x + i, _mm256_sub_pd(_mm256_mul_pd(vc, xi), _mm256_mul_pd(vs, yi)));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_mul_pd(vs, xi), _mm256_mul_pd(vc, yi)));
  }
  for (; i < n; ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

}  // namespace synthct::kernels::avx2

namespace synthct::kernels {

const KernelTable kAvx2Table = {
    Backend::Avx2,       avx2::sum,       avx2::centered_moments, avx2::sum_min,
    avx2::add_into,      avx2::axpy,      avx2::window_u8,        avx2::bin_index,
    avx2::butterfly,     avx2::rotate_pairs,
};

}  // namespace synthct::kernels

#endif  // SYNTHCT_HAVE_AVX2_KERNELS
