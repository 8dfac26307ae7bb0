#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace synthct {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const noexcept { return data_; }

  double trace() const;
  double frobenius_norm() const;
  Matrix transposed() const;
  /// (A + A^T) / 2
  Matrix symmetrized() const;
  /// max |a_ij - a_ji| / max(max |a_ij|, tiny)
  double asymmetry() const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator-(const Matrix& a, const Matrix& b);
  friend Matrix operator+(const Matrix& a, const Matrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the eigenvector of values[k]
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass drops below
/// 1e-12 * ||A||_F or 100 sweeps have run.
SymmetricEigen eigen_jacobi(const Matrix& a);

/// Householder tridiagonalization followed by implicit QL. O(n^3) once, used
/// for large feature dimensions where Jacobi sweeps get expensive.
SymmetricEigen eigen_tridiagonal_ql(const Matrix& a);

/// Jacobi up to kJacobiMaxDim, tridiagonal QL above.
inline constexpr std::size_t kJacobiMaxDim = 128;
SymmetricEigen eigen_symmetric(const Matrix& a);

}  // namespace synthct
