#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "phantom.hpp"
#include "synthct/spectral.hpp"
#include "test_util.hpp"

using namespace synthct;
using cd = std::complex<double>;

namespace {

// O(N^2) 2-D DFT straight from the definition.
std::vector<cd> naive_dft(int rows, int cols, const std::vector<cd>& x) {
  std::vector<cd> out(x.size());
  for (int u = 0; u < rows; ++u)
    for (int v = 0; v < cols; ++v) {
      cd s = 0;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const double ang = -2.0 * std::numbers::pi * (double(u) * r / rows + double(v) * c / cols);
          s += x[r * cols + c] * cd(std::cos(ang), std::sin(ang));
        }
      out[u * cols + v] = s;
    }
  return out;
}

SliceImage slice_of(int rows, int cols, std::vector<double> v) {
  SliceImage s;
  s.volume_id = "v";
  s.rows = rows;
  s.cols = cols;
  s.values = std::move(v);
  return s;
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 100.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Spectrum spectrum_of(int rows, int cols, std::vector<double> v) { return {rows, cols, std::move(v)}; }

}  // namespace

TEST_CASE("power-of-two helpers") {
  CHECK(is_power_of_two(1));
  CHECK(is_power_of_two(64));
  CHECK_FALSE(is_power_of_two(0));
  CHECK_FALSE(is_power_of_two(48));
  CHECK(next_power_of_two(1) == 1);
  CHECK(next_power_of_two(48) == 64);
  CHECK(next_power_of_two(64) == 64);
  CHECK(next_power_of_two(513) == 1024);
}

TEST_CASE("fft2d matches the naive DFT") {
  std::mt19937_64 rng(1);
  for (auto [rows, cols] : {std::pair{1, 1}, {2, 8}, {8, 4}, {16, 16}}) {
    CAPTURE(rows);
    CAPTURE(cols);
    std::normal_distribution<double> g;
    ComplexGrid grid{rows, cols, std::vector<cd>(rows * cols)};
    for (auto& x : grid.data) x = cd(g(rng), g(rng));
    const auto oracle = naive_dft(rows, cols, grid.data);
    fft2d(grid);
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::abs(grid.data[i] - oracle[i]) < 1e-9 * (1 + std::abs(oracle[i])));
  }
}

TEST_CASE("fft2d impulse, round trip, Parseval") {
  std::vector<double> impulse(64, 0.0);
  impulse[0] = 1.0;
  const ComplexGrid f = fft2d(8, 8, impulse);
  for (const cd& x : f.data) CHECK(std::abs(x - cd(1, 0)) < 1e-15);

  std::mt19937_64 rng(2);
  const auto x = random_values(rng, 64 * 64);
  ComplexGrid grid = fft2d(64, 64, x);
  double energy_x = 0.0, energy_f = 0.0;
  for (double v : x) energy_x += v * v;
  for (const cd& v : grid.data) energy_f += std::norm(v);
  CHECK(std::abs(energy_x - energy_f / (64.0 * 64.0)) <= 1e-6 * energy_x);

  fft2d(grid, true);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    err = std::max(err, std::abs(grid.data[i] - cd(x[i], 0)));
    ref = std::max(ref, std::abs(x[i]));
  }
  CHECK(err <= 1e-6 * ref);

  ComplexGrid bad{6, 8, std::vector<cd>(48)};
  CHECK_THROWS_KIND(fft2d(bad), ErrorKind::InvalidParameter);
}

TEST_CASE("to_spectrum basics") {
  const Spectrum flat = to_spectrum(slice_of(5, 7, std::vector<double>(35, 123.0)));
  CHECK(flat.rows == 8);
  CHECK(flat.cols == 8);
  for (double v : flat.values) CHECK(v == 0.0);

  std::mt19937_64 rng(3);
  const auto v = random_values(rng, 30 * 20);
  const Spectrum s = to_spectrum(slice_of(30, 20, v));
  CHECK(s.rows == 32);
  CHECK(s.cols == 32);
  for (double x : s.values) CHECK(x >= 0.0);

  // A constant offset disappears with the mean.
  auto shifted = v;
  for (double& x : shifted) x += 500.0;
  const Spectrum t = to_spectrum(slice_of(30, 20, shifted));
  for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(std::abs(s.values[i] - t.values[i]) < 1e-9);

  CHECK_THROWS_KIND(to_spectrum(slice_of(30, 20, v), 16, 32), ErrorKind::InvalidParameter);
  CHECK_THROWS_KIND(to_spectrum(slice_of(30, 20, v), 48, 32), ErrorKind::InvalidParameter);
  CHECK(to_spectrum(slice_of(30, 20, v), 64, 32).rows == 64);
}

TEST_CASE("shifted spectrum of a real image is centro-symmetric") {
  std::mt19937_64 rng(4);
  const Spectrum s = to_spectrum(slice_of(16, 32, random_values(rng, 16 * 32)));
  // After the shift, frequency (u, v) sits at (u + R/2, v + C/2), so -u maps to R - row.
  for (int r = 1; r < s.rows; ++r)
    for (int c = 1; c < s.cols; ++c) {
      const double a = s.values[r * s.cols + c];
      const double b = s.values[(s.rows - r) * s.cols + (s.cols - c)];
      CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, a));
    }
}

TEST_CASE("sine grating peaks at +-k columns on the center row") {
  for (int k : {1, 5, 12}) {
    std::vector<double> v(64 * 64);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) v[r * 64 + c] = std::sin(2.0 * std::numbers::pi * k * c / 64.0);
    const Spectrum s = to_spectrum(slice_of(64, 64, v));
    std::vector<std::size_t> order(s.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                      [&](auto a, auto b) { return s.values[a] > s.values[b]; });
    const std::size_t p1 = 32 * 64 + 32 - k, p2 = 32 * 64 + 32 + k;
    CHECK(((order[0] == p1 && order[1] == p2) || (order[0] == p2 && order[1] == p1)));
    CHECK(s.values[order[2]] < 1e-6 * s.values[order[0]]);
  }
}

TEST_CASE("average_spectrum") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<Spectrum> specs;
  for (int i = 0; i < 7; ++i) {
    Spectrum s = spectrum_of(4, 4, std::vector<double>(16));
    for (double& x : s.values) x = u(rng);
    specs.push_back(s);
  }
  const Spectrum avg = average_spectrum(specs);
  for (std::size_t i = 0; i < 16; ++i) {
    double sum = 0.0;
    for (const auto& s : specs) sum += s.values[i];
    CHECK(avg.values[i] == doctest::Approx(sum / 7.0).epsilon(1e-14));
  }
  const Spectrum one[] = {specs[0]};
  CHECK(average_spectrum(one).values == specs[0].values);
  const Spectrum twin[] = {specs[1], specs[1]};
  CHECK(average_spectrum(twin).values == specs[1].values);
  const Spectrum mixed[] = {specs[0], spectrum_of(2, 8, std::vector<double>(16))};
  CHECK_THROWS_KIND(average_spectrum(mixed), ErrorKind::InvalidParameter);
  CHECK_THROWS_KIND(average_spectrum(std::span<const Spectrum>{}), ErrorKind::InvalidParameter);
}

TEST_CASE("spectrum_correlation") {
  const Spectrum a = spectrum_of(2, 2, {1, 2, 3, 6});
  CHECK(spectrum_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  // max - a = {5, 4, 3, 0}, an exact negative affine image of a.
  CHECK(spectrum_correlation(a, spectrum_of(2, 2, {5, 4, 3, 0})) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_KIND(spectrum_correlation(a, spectrum_of(2, 2, {1, 1, 1, 1})), ErrorKind::DegenerateDistribution);
  CHECK_THROWS_KIND(spectrum_correlation(a, spectrum_of(1, 4, {1, 2, 3, 4})), ErrorKind::InvalidParameter);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 5);
  Spectrum x = spectrum_of(64, 64, std::vector<double>(4096)), y = x;
  for (double& v : x.values) v = u(rng);
  for (double& v : y.values) v = u(rng);
  const double r = spectrum_correlation(x, y);
  CHECK(std::abs(r) < 0.1);
  CHECK(std::abs(r - spectrum_correlation(y, x)) <= 1e-12);
  Spectrum x2 = x, y2 = y;
  for (double& v : x2.values) v = 2.5 * v + 3.0;
  for (double& v : y2.values) v = 2.5 * v + 3.0;
  CHECK(std::abs(r - spectrum_correlation(x2, y2)) <= 1e-12);
}

TEST_CASE("export_spectrum writes a scaled PGM and sidecar") {
  synthct::testing::TempDir dir("spec");
  const Spectrum s = spectrum_of(2, 2, {0.0, 1.0, 2.0, 4.0});
  export_spectrum(s, dir / "s.pgm");
  const Gray16Image img = read_pgm16(dir / "s.pgm");
  CHECK(img.pixels == std::vector<std::uint16_t>{0, 16384, 32768, 65535});
  std::ifstream in(dir / "s.pgm.json");
  const auto meta = nlohmann::json::parse(in);
  CHECK(meta["kind"] == "spectrum");
  CHECK(meta["calibration"]["slope"].template get<double>() == doctest::Approx(4.0 / 65535.0));
  CHECK(meta["rows"] == 2);
  CHECK(meta["cols"] == 2);
}
