#pragma once

// The two-stage thresholded readout and its frozen random sign weights.
//
// readout = relu( sum over sign columns (and rows, in the blockwise form) of
// shifted_relu(<attention weights, sign column>) ). Zero is exact: when no
// inner product clears the threshold the output is the literal 0.0, so
// "readout == 0" is a crisp event with no tolerance.

#include <cstdint>
#include <span>
#include <vector>

#include "polyattn/attention.hpp"
#include "polyattn/common.hpp"
#include "polyattn/datasets.hpp"
#include "polyattn/rng.hpp"

namespace polyattn {

// max{z - tau, 0}; exactly 0 for z <= tau.
inline double shifted_relu(double z, double tau) {
  return z > tau ? z - tau : 0.0;
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

// dim x m matrix with entries in {-1, +1}, column-major so sign columns are
// contiguous. Filled column by column; identical seeds give identical bits.
struct SignMatrix {
  std::size_t dim = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::vector<std::int8_t> entries;  // column-major, dim * m

  std::span<const std::int8_t> column(std::size_t l) const {
    return {entries.data() + l * dim, dim};
  }
};

inline SignMatrix sample_signs(std::size_t dim, std::size_t m,
                               std::uint64_t seed) {
  if (dim == 0) throw validation_error("sign matrix needs dim >= 1");
  SignMatrix y{dim, m, seed, {}};
  y.entries.resize(dim * m);
  Rng rng(seed);
  for (std::size_t l = 0; l < m; ++l) {
    for (std::size_t i = 0; i < dim; ++i) {
      y.entries[l * dim + i] = static_cast<std::int8_t>(rng.next_sign());
    }
  }
  return y;
}

struct NetworkParams {
  double tau = 0.2;
  std::size_t m = 1;
  double beta = 2.0;
  double delta = 0.01;
};

inline void validate(const NetworkParams& p) {
  check_finite(p.tau, "tau");
  check_finite(p.beta, "beta");
  if (p.m < 1) throw validation_error("m >= 1");
  if (!(p.delta > 0.0 && p.delta < 0.1)) {
    throw validation_error("delta in (0, 0.1)");
  }
}

inline double dot_signs(std::span<const double> x,
                        std::span<const std::int8_t> signs) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += signs[i] > 0 ? x[i] : -x[i];
  }
  return s;
}

// Score-vector form: relu of the summed shifted-relu inner products of the
// attention weights with each sign column.
inline double readout_score(const ScoreVector& s, const SignMatrix& y,
                            const NetworkParams& p) {
  if (y.dim != s.n) {
    throw std::invalid_argument("sign matrix dim must equal n");
  }
  const ProbVector f = score_attention(s, p.beta).weights;
  double total = 0.0;
  for (std::size_t l = 0; l < y.m; ++l) {
    total += shifted_relu(dot_signs(f.values(), y.column(l)), p.tau);
  }
  return relu(total);
}

// Blockwise form: the double sum runs over all n rows and all sign columns.
// With an all-ones weight product every non-spike row yields the same context
// coordinates, so only two distinct rows are ever evaluated and the remaining
// n-1 contribute by multiplicity.
inline double readout_selfattn(const SelfAttnInstance& inst,
                               const AttentionWeights& w, const SignMatrix& y,
                               const NetworkParams& p,
                               PathMode mode = PathMode::automatic) {
  if (y.dim != inst.d) {
    throw std::invalid_argument("sign matrix dim must equal d");
  }
  if (detail::use_structured(inst, w, mode)) {
    const Vector ctx_spike =
        context_row(inst, w, inst.spike_row, p.beta, PathMode::structured);
    const std::size_t other = inst.spike_row == 0 ? 1 : 0;
    Vector ctx_base;
    if (inst.n > 1) {
      ctx_base = context_row(inst, w, other, p.beta, PathMode::structured);
    }
    double total = 0.0;
    for (std::size_t l = 0; l < y.m; ++l) {
      const auto col = y.column(l);
      total += shifted_relu(dot_signs(ctx_spike, col), p.tau);
      if (inst.n > 1) {
        total += static_cast<double>(inst.n - 1) *
                 shifted_relu(dot_signs(ctx_base, col), p.tau);
      }
    }
    return relu(total);
  }

  double total = 0.0;
  for (std::size_t j0 = 0; j0 < inst.n; ++j0) {
    const Vector ctx = context_row(inst, w, j0, p.beta, PathMode::dense);
    for (std::size_t l = 0; l < y.m; ++l) {
      total += shifted_relu(dot_signs(ctx, y.column(l)), p.tau);
    }
  }
  return relu(total);
}

}  // namespace polyattn
