#include "kernels_internal.hpp"

#if SYNTHCT_HAVE_NEON_KERNELS

#include <arm_neon.h>

namespace synthct::kernels::neon {

double sum(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += x[i];
  return s;
}

Moments centered_moments(const double* a, const double* b, std::size_t n, double mean_a,
                         double mean_b) {
  const float64x2_t ma = vdupq_n_f64(mean_a);
  const float64x2_t mb = vdupq_n_f64(mean_b);
  float64x2_t ab = vdupq_n_f64(0.0), aa = vdupq_n_f64(0.0), bb = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t da = vsubq_f64(vld1q_f64(a + i), ma);
    const float64x2_t db = vsubq_f64(vld1q_f64(b + i), mb);
    ab = vaddq_f64(ab, vmulq_f64(da, db));
    aa = vaddq_f64(aa, vmulq_f64(da, da));
    bb = vaddq_f64(bb, vmulq_f64(db, db));
  }
  Moments m{vgetq_lane_f64(ab, 0) + vgetq_lane_f64(ab, 1),
            vgetq_lane_f64(aa, 0) + vgetq_lane_f64(aa, 1),
            vgetq_lane_f64(bb, 0) + vgetq_lane_f64(bb, 1)};
  for (; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    m.sum_ab += da * db;
    m.sum_aa += da * da;
    m.sum_bb += db * db;
  }
  return m;
}

double sum_min(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vminq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += (b[i] < a[i]) ? b[i] : a[i];
  return s;
}

void add_into(double* acc, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), vld1q_f64(x + i)));
  for (; i < n; ++i) acc[i] += x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  // vmulq + vaddq rather than vfmaq so results match the scalar reference.
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void window_u8(const double* v, std::size_t n, double lo, double width, std::uint8_t* out) {
  const float64x2_t vlo = vdupq_n_f64(lo);
  const float64x2_t vw = vdupq_n_f64(width);
  const float64x2_t k255 = vdupq_n_f64(255.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t half = vdupq_n_f64(0.5);
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t t = vmulq_f64(vdivq_f64(vsubq_f64(vld1q_f64(v + i), vlo), vw), k255);
    t = vminq_f64(vmaxq_f64(t, zero), k255);
    const float64x2_t f = vrndmq_f64(t);
    const uint64x2_t ge = vcgeq_f64(vsubq_f64(t, f), half);
    const float64x2_t carry =
        vreinterpretq_f64_u64(vandq_u64(ge, vreinterpretq_u64_f64(one)));
    const float64x2_t g = vaddq_f64(f, carry);
    out[i] = static_cast<std::uint8_t>(vgetq_lane_f64(g, 0));
    out[i + 1] = static_cast<std::uint8_t>(vgetq_lane_f64(g, 1));
  }
  for (; i < n; ++i) {
    double t = (v[i] - lo) / width * 255.0;
    t = t < 0.0 ? 0.0 : t;
    t = t > 255.0 ? 255.0 : t;
    const double f = __builtin_floor(t);
    out[i] = static_cast<std::uint8_t>(f + ((t - f) >= 0.5 ? 1.0 : 0.0));
  }
}

void bin_index(const double* v, std::size_t n, double lo, double hi, int n_bins,
               std::int32_t* out) {
  const double span = hi - lo;
  const double nb = static_cast<double>(n_bins);
  const float64x2_t vlo = vdupq_n_f64(lo);
  const float64x2_t vspan = vdupq_n_f64(span);
  const float64x2_t vnb = vdupq_n_f64(nb);
  const float64x2_t top = vdupq_n_f64(nb - 1.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t f = vrndmq_f64(vmulq_f64(vdivq_f64(vsubq_f64(vld1q_f64(v + i), vlo), vspan), vnb));
    f = vminq_f64(vmaxq_f64(f, zero), top);
    out[i] = static_cast<std::int32_t>(vgetq_lane_f64(f, 0));
    out[i + 1] = static_cast<std::int32_t>(vgetq_lane_f64(f, 1));
  }
  for (; i < n; ++i) {
    double f = __builtin_floor((v[i] - lo) / span * nb);
    f = f < 0.0 ? 0.0 : f;
    f = f > nb - 1.0 ? nb - 1.0 : f;
    out[i] = static_cast<std::int32_t>(f);
  }
}

void butterfly(std::complex<double>* a, std::complex<double>* b, const std::complex<double>* w,
               std::size_t n) {
  double* pa = reinterpret_cast<double*>(a);
  double* pb = reinterpret_cast<double*>(b);
  const double* pw = reinterpret_cast<const double*>(w);
  const float64x2_t sign = {-1.0, 1.0};
  for (std::size_t i = 0; i < n; ++i) {
    const float64x2_t vb = vld1q_f64(pb + 2 * i);
    const float64x2_t vw = vld1q_f64(pw + 2 * i);
    const float64x2_t wr = vdupq_laneq_f64(vw, 0);
    const float64x2_t wi = vdupq_laneq_f64(vw, 1);
    const float64x2_t bswap = vextq_f64(vb, vb, 1);
    // [wr*br - wi*bi, wr*bi + wi*br]
    const float64x2_t t = vaddq_f64(vmulq_f64(wr, vb), vmulq_f64(sign, vmulq_f64(wi, bswap)));
    const float64x2_t va = vld1q_f64(pa + 2 * i);
    vst1q_f64(pa + 2 * i, vaddq_f64(va, t));
    vst1q_f64(pb + 2 * i, vsubq_f64(va, t));
  }
}

void rotate_pairs(double* x, double* y, std::size_t n, double c, double s) {
  const float64x2_t vc = vdupq_n_f64(c);
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t xi = vld1q_f64(x + i);
    const float64x2_t yi = vld1q_f64(y + i);
    vst1q_f64(x + i, vsubq_f64(vmulq_f64(vc, xi), vmulq_f64(vs, yi)));
    vst1q_f64(y + i, vaddq_f64(vmulq_f64(vs, xi), vmulq_f64(vc, yi)));
  }
  for (; i < n; ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

}  // namespace synthct::kernels::neon

namespace synthct::kernels {

const KernelTable kNeonTable = {
    Backend::Neon,       neon::sum,       neon::centered_moments, neon::sum_min,
    neon::add_into,      neon::axpy,      neon::window_u8,        neon::bin_index,
    neon::butterfly,     neon::rotate_pairs,
};

}  // namespace synthct::kernels

#endif  // SYNTHCT_HAVE_NEON_KERNELS
