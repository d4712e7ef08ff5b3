#pragma once

// Dense row-major matrices and the elementary operators everything else is
// built from: matmul, transpose, Kronecker product, Hadamard product and
// row-major vectorization.
//
// Index conventions (0-based): kron(a, b) places a(i1,j1)*b(i2,j2) at row
// i1*b.rows()+i2, column j1*b.cols()+j2, and vectorize flattens row-major.
// Together these satisfy vectorize(g(A1*W*A2^T)) = g(kron(A1,A2)*vectorize(W))
// entrywise for any entrywise g.

#include <cstddef>
#include <span>
#include <vector>

#include "polyattn/common.hpp"

namespace polyattn {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {
    if (rows == 0 || cols == 0) {
      throw validation_error("matrix dimensions must be positive");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix ones(std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols, 1.0);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) {
    throw validation_error(std::string(what) + " has non-finite entries");
  }
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("dot: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  Matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw std::invalid_argument("matvec: dimension mismatch");
  }
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

// Largest entry count a Kronecker product is allowed to materialize.
inline constexpr std::size_t kKronMaxEntries = 100'000'000;

inline Matrix kron(const Matrix& a, const Matrix& b) {
  require_finite(a, "kron lhs");
  require_finite(b, "kron rhs");
  const std::size_t max_dim = kKronMaxEntries;
  if (a.rows() > max_dim / b.rows() || a.cols() > max_dim / b.cols()) {
    throw std::length_error("kron: product shape overflows the size cap");
  }
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (rows > kKronMaxEntries / cols) {
    throw std::length_error("kron: product shape overflows the size cap");
  }
  Matrix out(rows, cols);
  for (std::size_t i1 = 0; i1 < a.rows(); ++i1) {
    for (std::size_t j1 = 0; j1 < a.cols(); ++j1) {
      const double aij = a(i1, j1);
      for (std::size_t i2 = 0; i2 < b.rows(); ++i2) {
        for (std::size_t j2 = 0; j2 < b.cols(); ++j2) {
          out(i1 * b.rows() + i2, j1 * b.cols() + j2) = aij * b(i2, j2);
        }
      }
    }
  }
  return out;
}

inline Vector hadamard(const Vector& x, const Vector& u) {
  if (x.size() != u.size()) {
    throw std::invalid_argument("hadamard: dimension mismatch");
  }
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    check_finite(x[i], "hadamard lhs entry");
    check_finite(u[i], "hadamard rhs entry");
    out[i] = x[i] * u[i];
  }
  return out;
}

inline Vector vectorize(const Matrix& a) { return a.data(); }

}  // namespace polyattn
