#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/histogram.hpp"
#include "synthct/kernels.hpp"
#include "synthct/mean.hpp"
#include "synthct/spectral.hpp"

namespace synthct {
namespace {

using cplx = std::complex<double>;

// Twiddles for every stage of an n-point transform, stage m at offset m/2 - 1:
// w_j = exp(-+2 pi i j / m), j < m/2. Computed directly, not by recurrence.
std::vector<cplx> stage_twiddles(std::size_t n, bool inverse) {
  std::vector<cplx> w(n > 1 ? n - 1 : 0);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t m = 2; m <= n; m <<= 1)
    for (std::size_t j = 0; j < m / 2; ++j)
      w[m / 2 - 1 + j] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(j) /
                                             static_cast<double>(m));
  return w;
}

void bit_reverse(std::span<cplx> x) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
}

void fft1d(std::span<cplx> x, std::span<const cplx> tw) {
  bit_reverse(x);
  const std::size_t n = x.size();
  for (std::size_t m = 2; m <= n; m <<= 1) {
    const std::size_t half = m / 2;
    const auto w = tw.subspan(half - 1, half);
    for (std::size_t k = 0; k < n; k += m) kernels::butterfly(x.subspan(k, half), x.subspan(k + half, half), w);
  }
}

void transform_rows(std::vector<cplx>& data, std::size_t rows, std::size_t cols, bool inverse) {
  const auto tw = stage_twiddles(cols, inverse);
  for (std::size_t r = 0; r < rows; ++r) fft1d(std::span(data).subspan(r * cols, cols), tw);
}

std::vector<cplx> transpose(const std::vector<cplx>& in, std::size_t rows, std::size_t cols) {
  std::vector<cplx> out(in.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  return out;
}

}  // namespace

bool is_power_of_two(int n) noexcept { return n > 0 && (n & (n - 1)) == 0; }

int next_power_of_two(int n) {
  if (n < 1 || n > (1 << 30)) throw Error(ErrorKind::InvalidParameter, "dimension out of range");
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft2d(ComplexGrid& grid, bool inverse) {
  if (!is_power_of_two(grid.rows) || !is_power_of_two(grid.cols))
    throw Error(ErrorKind::InvalidParameter, "fft2d needs power-of-two dimensions (got " +
                                                 std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + ")");
  const auto rows = static_cast<std::size_t>(grid.rows);
  const auto cols = static_cast<std::size_t>(grid.cols);
  if (grid.data.size() != rows * cols) throw Error(ErrorKind::InvalidParameter, "grid size mismatch");
  transform_rows(grid.data, rows, cols, inverse);
  auto t = transpose(grid.data, rows, cols);
  transform_rows(t, cols, rows, inverse);
  grid.data = transpose(t, cols, rows);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(rows * cols);
    for (auto& z : grid.data) z *= scale;
  }
}

ComplexGrid fft2d(int rows, int cols, std::span<const double> values) {
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw Error(ErrorKind::InvalidParameter, "fft2d input size mismatch");
  ComplexGrid g{rows, cols, std::vector<cplx>(values.begin(), values.end())};
  fft2d(g);
  return g;
}

Spectrum to_spectrum(const SliceImage& slice) {
  slice.validate();
  return to_spectrum(slice, next_power_of_two(slice.rows), next_power_of_two(slice.cols));
}

Spectrum to_spectrum(const SliceImage& slice, int pad_rows, int pad_cols) {
  slice.validate();
  if (!is_power_of_two(pad_rows) || !is_power_of_two(pad_cols) || pad_rows < slice.rows || pad_cols < slice.cols)
    throw Error(ErrorKind::InvalidParameter, "pad target must be powers of two covering the slice");
  const double mean = kernels::sum(slice.values) / static_cast<double>(slice.size());
  ComplexGrid g{pad_rows, pad_cols,
                std::vector<cplx>(static_cast<std::size_t>(pad_rows) * static_cast<std::size_t>(pad_cols))};
  for (int r = 0; r < slice.rows; ++r)
    for (int c = 0; c < slice.cols; ++c)
      g.data[static_cast<std::size_t>(r) * pad_cols + c] = slice.at(r, c) - mean;
  fft2d(g);

  Spectrum s{pad_rows, pad_cols, std::vector<double>(g.data.size())};
  const int hr = pad_rows / 2, hc = pad_cols / 2;
  for (int r = 0; r < pad_rows; ++r) {
    const int sr = (r + hr) % pad_rows;
    for (int c = 0; c < pad_cols; ++c) {
      const int sc = (c + hc) % pad_cols;
      s.values[static_cast<std::size_t>(sr) * pad_cols + sc] =
          std::log1p(std::abs(g.data[static_cast<std::size_t>(r) * pad_cols + c]));
    }
  }
  return s;
}

Spectrum average_spectrum(std::span<const Spectrum> specs) {
  if (specs.empty()) throw Error(ErrorKind::InvalidParameter, "cannot average an empty spectrum list");
  Spectrum out{specs.front().rows, specs.front().cols, {}};
  MeanAccumulator mean;
  for (const auto& s : specs) {
    if (s.rows != out.rows || s.cols != out.cols)
      throw Error(ErrorKind::InvalidParameter, "spectra have different dimensions");
    mean.add(s.values);
  }
  out.values = mean.mean();
  return out;
}

double spectrum_correlation(const Spectrum& a, const Spectrum& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw Error(ErrorKind::InvalidParameter, "spectra have different dimensions");
  return pearson(a.values, b.values);
}

void export_spectrum(const Spectrum& s, const std::filesystem::path& path) {
  const double peak = s.values.empty() ? 0.0 : *std::max_element(s.values.begin(), s.values.end());
  const double slope = peak > 0.0 ? peak / 65535.0 : 1.0;
  const Calibration cal = Calibration::linear(slope, 0.0);
  Gray16Image img{s.rows, s.cols, std::vector<std::uint16_t>(s.values.size())};
  for (std::size_t i = 0; i < s.values.size(); ++i) img.pixels[i] = cal.invert(s.values[i]);
  write_pgm16(img, path);

  nlohmann::json meta;
  meta["kind"] = "spectrum";
  meta["rows"] = s.rows;
  meta["cols"] = s.cols;
  meta["calibration"] = {{"slope", slope}, {"intercept", 0.0}};
  auto side = path;
  side += ".json";
  std::ofstream out(side, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + side.string());
  out << meta.dump(2) << '\n';
}

}  // namespace synthct
