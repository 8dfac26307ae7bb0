#pragma once

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include "synthct/imaging.hpp"

namespace synthct {

/// Row-major complex grid for the 2-D transform.
struct ComplexGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::complex<double>> data;
};

bool is_power_of_two(int n) noexcept;
int next_power_of_two(int n);

/// In-place radix-2 transform of each row, then each column. The forward pass
/// is unnormalized; the inverse scales by 1/(rows*cols). Throws
/// InvalidParameter when either dimension is not a power of two.
void fft2d(ComplexGrid& grid, bool inverse = false);
/// Convenience: real input, forward transform.
ComplexGrid fft2d(int rows, int cols, std::span<const double> values);

/// Centered log-magnitude spectrum, log(1 + |X|), DC at (rows/2, cols/2).
struct Spectrum {
  int rows = 0;  // powers of two
  int cols = 0;
  std::vector<double> values;
};

/// Mean-subtract, zero-pad to the next power of two per axis, transform,
/// magnitude, fftshift, log1p.
Spectrum to_spectrum(const SliceImage& slice);
/// Same, padding to an explicit power-of-two target at least as large as the
/// slice. Used to give every slice of an evaluation run the same grid.
Spectrum to_spectrum(const SliceImage& slice, int pad_rows, int pad_cols);

/// Element-wise mean; throws InvalidParameter on an empty list or mixed sizes.
Spectrum average_spectrum(std::span<const Spectrum> specs);

/// Pearson correlation over all cells; DegenerateDistribution on zero variance.
double spectrum_correlation(const Spectrum& a, const Spectrum& b);

/// 16-bit PGM scaled so the largest value maps to 65535, plus `<path>.json`
/// {"kind": "spectrum", "rows", "cols", "calibration": {"slope", "intercept"}}.
void export_spectrum(const Spectrum& s, const std::filesystem::path& path);

}  // namespace synthct
