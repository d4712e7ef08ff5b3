#pragma once

// Attention forward passes.
//
// Scores s feed an entrywise nonlinearity g (z^beta or exp) followed by row
// normalization. Powers are carried in the log domain and rows are
// exp-normalized after subtracting the row maximum, so (a+1)^{2*beta} style
// magnitudes never overflow.
//
// For structured instances with an all-ones weight product, the row of
// pre-activations collapses to products of row sums: entry (j0, j1) equals
// (rowsum(j0) * rowsum(j1))^beta. That closed form is the structured fast
// path; it must agree with the dense path and is mandatory above the dense
// row cap.

#include <cstddef>
#include <stdexcept>

#include "polyattn/common.hpp"
#include "polyattn/datasets.hpp"
#include "polyattn/logscalar.hpp"
#include "polyattn/matrix.hpp"

namespace polyattn {

// Probability weights: nonnegative entries summing to 1 within 1e-12.
class ProbVector {
 public:
  explicit ProbVector(Vector values) : p_(std::move(values)) {
    if (p_.empty()) throw validation_error("ProbVector: empty");
    for (double x : p_) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw validation_error("ProbVector: entries must be in [0, 1]");
      }
    }
    if (std::abs(kahan_total(p_) - 1.0) > 1e-12) {
      throw validation_error("ProbVector: entries must sum to 1");
    }
  }

  std::size_t dim() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const Vector& values() const noexcept { return p_; }

 private:
  Vector p_;
};

// The weight product QK^T is stored directly; no lemma here ever constrains
// the individual factors.
struct AttentionWeights {
  Matrix qk;
  Matrix v;

  static AttentionWeights ones_identity(std::size_t d) {
    return AttentionWeights{Matrix::ones(d, d), Matrix::identity(d)};
  }

  bool qk_is_all_ones() const {
    for (double x : qk.data()) {
      if (x != 1.0) return false;
    }
    return true;
  }
};

enum class PathMode { automatic, dense, structured };

struct ScoreAttention {
  LogVector powers;   // s_i^beta, log domain
  LogScalar total;    // sum of powers
  ProbVector weights; // powers / total
};

// Entrywise beta-th powers of a positive score vector, their total, and the
// normalized weights.
inline ScoreAttention score_attention(const Vector& scores, double beta) {
  LogVector powers = pow_log(scores, beta);
  LogScalar total = log_sum(powers);
  ProbVector weights(normalized_exp(powers));
  return ScoreAttention{std::move(powers), total, std::move(weights)};
}

inline ScoreAttention score_attention(const ScoreVector& s, double beta) {
  return score_attention(s.entries, beta);
}

struct BlockAttention {
  LogVector powers;
  ProbVector weights;
};

namespace detail {

inline void check_row_index(const SelfAttnInstance& inst, std::size_t j0) {
  if (j0 >= inst.n) throw std::out_of_range("row index out of range");
}

inline bool use_structured(const SelfAttnInstance& inst,
                           const AttentionWeights& w, PathMode mode) {
  switch (mode) {
    case PathMode::structured:
      if (!w.qk_is_all_ones()) {
        throw std::invalid_argument(
            "structured path requires an all-ones weight product");
      }
      return true;
    case PathMode::dense:
      return false;
    case PathMode::automatic:
      if (w.qk_is_all_ones()) return true;
      if (inst.n > kDenseRowCap) {
        throw std::length_error(
            "n exceeds the dense row cap and the structured path requires an "
            "all-ones weight product");
      }
      return false;
  }
  return false;
}

inline LogVector structured_row_powers(const SelfAttnInstance& inst,
                                       std::size_t j0, double beta) {
  const double base = inst.b + inst.c;
  const double spike = inst.a + base;
  const double log_base = std::log(base);
  const double log_spike = std::log(spike);
  const double row_log = (j0 == inst.spike_row) ? log_spike : log_base;
  LogVector powers(inst.n);
  const LogScalar base_entry = LogScalar::positive(beta * (row_log + log_base));
  for (std::size_t j1 = 0; j1 < inst.n; ++j1) powers[j1] = base_entry;
  powers[inst.spike_row] = LogScalar::positive(beta * (row_log + log_spike));
  return powers;
}

// Powers of row(j0) * qk * a2^T from explicit matrices.
inline LogVector dense_row_powers_matrix(const Matrix& a1, const Matrix& qk,
                                         const Matrix& a2, std::size_t j0,
                                         double beta) {
  if (qk.rows() != a1.cols() || qk.cols() != a2.cols()) {
    throw std::invalid_argument("weight product must be d x d");
  }
  require_finite(qk, "weight product");
  const Vector lhs = matvec(transpose(qk), a1.row(j0));  // row(j0) * qk
  LogVector powers(a2.rows());
  for (std::size_t j1 = 0; j1 < a2.rows(); ++j1) {
    const double z = dot(std::span<const double>(lhs), a2.row(j1));
    if (!(z > 0.0)) {
      throw std::domain_error("pre-activation must be positive");
    }
    powers[j1] = LogScalar::positive(beta * std::log(z));
  }
  return powers;
}

inline LogVector dense_row_powers(const SelfAttnInstance& inst,
                                  const AttentionWeights& w, std::size_t j0,
                                  double beta) {
  const Matrix a = materialize(inst);
  return dense_row_powers_matrix(a, w.qk, a, j0, beta);
}

}  // namespace detail

// Row j0 of the blockwise attention: entrywise powers of
// row(j0) * QK^T * A^T and their normalized weights.
inline BlockAttention block_attention(const SelfAttnInstance& inst,
                                      const AttentionWeights& w,
                                      std::size_t j0, double beta,
                                      PathMode mode = PathMode::automatic) {
  detail::check_row_index(inst, j0);
  LogVector powers = detail::use_structured(inst, w, mode)
                         ? detail::structured_row_powers(inst, j0, beta)
                         : detail::dense_row_powers(inst, w, j0, beta);
  ProbVector weights(normalized_exp(powers));
  return BlockAttention{std::move(powers), std::move(weights)};
}

// d coordinates of the attention output for row j0: inner products of the
// attention weights with each column of A*V.
inline Vector context_row(const SelfAttnInstance& inst,
                          const AttentionWeights& w, std::size_t j0,
                          double beta, PathMode mode = PathMode::automatic) {
  detail::check_row_index(inst, j0);
  if (w.v.rows() != inst.d || w.v.cols() != inst.d) {
    throw std::invalid_argument("value matrix must be d x d");
  }
  require_finite(w.v, "value matrix");
  const ProbVector f = block_attention(inst, w, j0, beta, mode).weights;

  if (detail::use_structured(inst, w, mode)) {
    // y = A^T f computed from the column structure, then V^T y.
    Vector y(inst.d, 0.0);
    y[0] = inst.a * f[inst.spike_row];
    for (std::size_t col = 1; col + 1 < inst.d; ++col) {
      KahanSum s;
      for (std::size_t k = 0; k < inst.t; ++k) {
        s.add(f[inst.block_support_row(col, k)]);
      }
      y[col] = inst.b * s.value();
    }
    KahanSum total;
    for (double x : f.values()) total.add(x);
    y[inst.d - 1] = inst.c * total.value();
    return matvec(transpose(w.v), y);
  }

  const Matrix av = matmul(materialize(inst), w.v);
  Vector out(inst.d, 0.0);
  for (std::size_t i0 = 0; i0 < inst.d; ++i0) {
    KahanSum s;
    for (std::size_t j1 = 0; j1 < inst.n; ++j1) {
      s.add(f[j1] * av(j1, i0));
    }
    out[i0] = s.value();
  }
  return out;
}

enum class AttentionKind { softmax, poly };

// Full forward pass: row-normalized g(A QK^T A^T) times A V. Dense only.
inline Matrix attention_forward(const Matrix& a, const AttentionWeights& w,
                                AttentionKind kind, double beta = 0.0) {
  if (a.rows() > kDenseRowCap) {
    throw std::length_error(
        strfmt("attention_forward capped at n <= %zu rows", kDenseRowCap));
  }
  if (w.qk.rows() != a.cols() || w.qk.cols() != a.cols() ||
      w.v.rows() != a.cols() || w.v.cols() != a.cols()) {
    throw std::invalid_argument("weights must be d x d");
  }
  require_finite(a, "input");
  require_finite(w.qk, "weight product");
  require_finite(w.v, "value matrix");

  const std::size_t n = a.rows();
  const Matrix s = matmul(a, w.qk);    // n x d
  const Matrix av = matmul(a, w.v);    // n x d
  Matrix out(n, a.cols(), 0.0);
  LogVector row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double z = dot(s.row(i), a.row(j));
      if (kind == AttentionKind::poly) {
        if (!(z > 0.0)) {
          throw std::domain_error("pre-activation must be positive");
        }
        row[j] = LogScalar::positive(beta * std::log(z));
      } else {
        row[j] = LogScalar::positive(z);
      }
    }
    const Vector f = normalized_exp(row);
    for (std::size_t c = 0; c < a.cols(); ++c) {
      KahanSum acc;
      for (std::size_t j = 0; j < n; ++j) acc.add(f[j] * av(j, c));
      out(i, c) = acc.value();
    }
  }
  return out;
}

// Largest n^2 * d^2 for which both evaluation paths are materialized.
inline constexpr std::size_t kTwoPathCap = 1'000'000;

// Max relative discrepancy between vectorize(g(A1 QK^T A2^T)) and
// g(kron(A1, A2) * vectorize(QK^T)).
inline double tensor_trick_discrepancy(const Matrix& a1, const Matrix& a2,
                                       const AttentionWeights& w, double beta) {
  const std::size_t n2 = a1.rows() * a2.rows();
  const std::size_t d2 = a1.cols() * a2.cols();
  if (n2 > kTwoPathCap / d2) {
    throw std::length_error("two-path check capped at n^2 d^2 <= 1e6");
  }
  if (a1.cols() != a2.cols() || w.qk.rows() != a1.cols() ||
      w.qk.cols() != a1.cols()) {
    throw std::invalid_argument("shape mismatch");
  }

  const auto g = [beta](double z) {
    if (!(z > 0.0)) {
      throw std::domain_error("pre-activation must be positive");
    }
    return std::pow(z, beta);
  };

  const Matrix m = matmul(matmul(a1, w.qk), transpose(a2));
  Vector path1 = vectorize(m);
  for (double& z : path1) z = g(z);

  const Matrix big = kron(a1, a2);
  Vector path2 = matvec(big, vectorize(w.qk));
  for (double& z : path2) z = g(z);

  double worst = 0.0;
  for (std::size_t i = 0; i < path1.size(); ++i) {
    worst = std::max(worst, rel_err(path2[i], path1[i]));
  }
  return worst;
}

}  // namespace polyattn
