#include <cmath>

#include "doctest.h"
#include "polyattn/attention.hpp"
#include "polyattn/rng.hpp"

using namespace polyattn;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo,
                     double hi) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.next_uniform(lo, hi);
  }
  return m;
}

SelfAttnInstance figure_instance(Label label, double a) {
  return build_selfattn_instance(9, 5, 3, 1, a, 0.5, 0.5, label);
}

}  // namespace

TEST_CASE("score_attention: two-entry hand computation") {
  const ScoreAttention r = score_attention(Vector{2.0, 4.0}, 2.0);
  CHECK(rel_err(r.powers[0].value(), 4.0) <= 1e-12);
  CHECK(rel_err(r.powers[1].value(), 16.0) <= 1e-12);
  CHECK(rel_err(r.total.value(), 20.0) <= 1e-12);
  CHECK(rel_err(r.weights[0], 0.2) <= 1e-12);
  CHECK(rel_err(r.weights[1], 0.8) <= 1e-12);
}

TEST_CASE("score_attention: constant scores are uniform") {
  for (const double beta : {0.0, 0.5, 3.0, 40.0}) {
    const ScoreAttention r = score_attention(Vector(37, 2.0), beta);
    for (std::size_t i = 0; i < 37; ++i) {
      CHECK(rel_err(r.weights[i], 1.0 / 37.0) <= 1e-12);
    }
  }
}

TEST_CASE("score_attention: spike weight at n=1024, exact rational oracle") {
  // 32^4 = 1048576 and 1023 * 4^4 = 261888, so the spike weight is
  // 1048576 / 1310464; both integers are exact in double.
  Vector s(1024, 4.0);
  s[600] = 32.0;
  const ScoreAttention r = score_attention(s, 4.0);
  const double expect = 1048576.0 / 1310464.0;
  CHECK(rel_err(r.weights[600], expect) <= 1e-12);
  CHECK(r.weights[600] >= 0.5);
}

TEST_CASE("score_attention: rejects nonpositive scores") {
  CHECK_THROWS_AS(score_attention(Vector{2.0, -1.0}, 2.0), std::domain_error);
}

TEST_CASE("score_attention: weights sum to one") {
  Rng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng.next_index(300);
    Vector s(n);
    for (double& v : s) v = std::exp(rng.next_uniform(-3.0, 6.0));
    const ScoreAttention r = score_attention(s, rng.next_uniform(0.0, 12.0));
    CHECK(std::abs(kahan_total(r.weights.values()) - 1.0) <= 1e-12);
  }
}

TEST_CASE("score_attention: scale invariance of the weights") {
  Rng rng(37);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng.next_index(64);
    Vector s(n);
    for (double& v : s) v = std::exp(rng.next_uniform(-2.0, 4.0));
    const double lambda = std::exp(rng.next_uniform(-40.0, 40.0));
    const double beta = rng.next_uniform(0.0, 9.0);
    Vector scaled = s;
    for (double& v : scaled) v *= lambda;
    const ProbVector f1 = score_attention(s, beta).weights;
    const ProbVector f2 = score_attention(scaled, beta).weights;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(rel_err(f2[i], f1[i]) <= 1e-12);
    }
  }
}

TEST_CASE("block_attention: spike row of the 9x5 instance") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  const BlockAttention row = block_attention(inst, w, inst.spike_row, 4.0);
  // Powers (a+1)^{2 beta} = 256 at the spike column, (a+1)^beta = 16
  // elsewhere; weights 256/384 = 2/3 and 16/384 = 1/24.
  CHECK(rel_err(row.powers[inst.spike_row].value(), 256.0) <= 1e-12);
  CHECK(rel_err(row.powers[0].value(), 16.0) <= 1e-12);
  CHECK(rel_err(row.weights[inst.spike_row], 2.0 / 3.0) <= 1e-12);
  for (std::size_t j1 = 0; j1 < 9; ++j1) {
    if (j1 != inst.spike_row) {
      CHECK(rel_err(row.weights[j1], 1.0 / 24.0) <= 1e-12);
    }
  }
}

TEST_CASE("block_attention: non-spike row of the 9x5 instance") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  const BlockAttention row = block_attention(inst, w, 5, 4.0);
  // One power of 16 against eight ones: 16/24 = 2/3 on the spike column.
  CHECK(rel_err(row.weights[inst.spike_row], 2.0 / 3.0) <= 1e-12);
  CHECK(row.weights[inst.spike_row] >= 0.5);
  for (std::size_t j1 = 0; j1 < 9; ++j1) {
    if (j1 != inst.spike_row) {
      CHECK(rel_err(row.weights[j1], 1.0 / 24.0) <= 1e-12);
    }
  }
}

TEST_CASE("block_attention: a = 0 degenerate instance is uniform") {
  // Constructed directly; the validator would reject a = 0 for either label.
  SelfAttnInstance inst{9, 5, 3, 1, 0.0, 0.5, 0.5, Label::d0, 0};
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  for (std::size_t j0 : {0, 1, 8}) {
    const BlockAttention row = block_attention(inst, w, j0, 4.0);
    for (std::size_t j1 = 0; j1 < 9; ++j1) {
      CHECK(rel_err(row.weights[j1], 1.0 / 9.0) <= 1e-12);
    }
  }
}

TEST_CASE("block_attention: row index out of range") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  CHECK_THROWS_AS(block_attention(inst, w, 9, 4.0), std::out_of_range);
}

TEST_CASE("block_attention: structured path equals dense path") {
  Rng rng(41);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t dm2 = 2 + rng.next_index(9);
    const std::size_t t = 1 + rng.next_index(8);
    const std::size_t n = dm2 * t;
    const bool d1 = rng.next_sign() > 0;
    const double a =
        d1 ? rng.next_uniform(0.7, 2.5) : rng.next_uniform(0.01, 0.09);
    const SelfAttnInstance inst =
        build_selfattn_instance(n, dm2 + 2, t, rng.next_index(n), a, 0.5, 0.5,
                                d1 ? Label::d1 : Label::d0);
    const AttentionWeights w = AttentionWeights::ones_identity(inst.d);
    const double beta = rng.next_uniform(0.1, 14.0);
    for (std::size_t j0 : {std::size_t{0}, inst.spike_row, n - 1}) {
      const BlockAttention fast =
          block_attention(inst, w, j0, beta, PathMode::structured);
      const BlockAttention dense =
          block_attention(inst, w, j0, beta, PathMode::dense);
      for (std::size_t j1 = 0; j1 < n; ++j1) {
        CHECK(rel_err(fast.weights[j1], dense.weights[j1]) <= 1e-12);
        CHECK(rel_err(fast.powers[j1].logmag, dense.powers[j1].logmag) <=
              1e-12);
      }
    }
  }
}

TEST_CASE("block_attention: spike weight is nondecreasing in beta") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  double prev = 0.0;
  for (double beta = 0.25; beta <= 16.0; beta += 0.25) {
    const BlockAttention row = block_attention(inst, w, 4, beta);
    CHECK(row.weights[inst.spike_row] >= prev - 1e-15);
    prev = row.weights[inst.spike_row];
  }
}

TEST_CASE("context_row: worked values on the 9x5 instance") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  const Vector ctx = context_row(inst, w, inst.spike_row, 4.0);
  // Weights are 2/3 on the spike column and 1/24 elsewhere, so the first
  // coordinate is a * 2/3 and the last is exactly c.
  CHECK(rel_err(ctx[0], 2.0 / 3.0) <= 1e-12);
  CHECK(ctx[0] >= 0.5 * inst.a);
  CHECK(std::abs(ctx[4] - inst.c) <= 1e-12);
  const std::size_t special = inst.special_block_col();
  // Special block column: b * (2/3 + 2/24); others: b * 3/24.
  CHECK(rel_err(ctx[special], 0.375) <= 1e-12);
  for (std::size_t col = 1; col < 4; ++col) {
    if (col != special) CHECK(rel_err(ctx[col], 0.0625) <= 1e-12);
  }
}

TEST_CASE("context_row: zero value matrix annihilates") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  AttentionWeights w = AttentionWeights::ones_identity(5);
  w.v = Matrix(5, 5, 0.0);
  for (double x : context_row(inst, w, 3, 4.0)) CHECK(x == 0.0);
}

TEST_CASE("context_row: structured equals dense with a generic value matrix") {
  Rng rng(47);
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  AttentionWeights w = AttentionWeights::ones_identity(5);
  w.v = random_matrix(rng, 5, 5, -1.0, 1.0);
  for (std::size_t j0 = 0; j0 < 9; ++j0) {
    const Vector fast = context_row(inst, w, j0, 4.0, PathMode::structured);
    const Vector dense = context_row(inst, w, j0, 4.0, PathMode::dense);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(rel_err(fast[i], dense[i]) <= 1e-12);
    }
  }
}

TEST_CASE("attention_forward: scalar case") {
  Matrix a(1, 1, 1.0);
  AttentionWeights w{Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)};
  const Matrix out = attention_forward(a, w, AttentionKind::poly, 2.0);
  CHECK(out(0, 0) == 1.0);
}

TEST_CASE("attention_forward: matches the triple-loop oracle") {
  Rng rng(53);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 4, d = 2;
    const Matrix a = random_matrix(rng, n, d, 0.2, 2.0);
    const AttentionWeights w{random_matrix(rng, d, d, 0.1, 1.0),
                             random_matrix(rng, d, d, -1.0, 1.0)};
    const double beta = 2.0 + rng.next_index(3);

    // Naive oracle: materialize scores, power, normalize, mix.
    Matrix scores(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double z = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
          for (std::size_t q = 0; q < d; ++q) {
            z += a(i, p) * w.qk(p, q) * a(j, q);
          }
        }
        scores(i, j) = std::pow(z, beta);
      }
    }
    Matrix want(n, d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) denom += scores(i, j);
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double av = 0.0;
          for (std::size_t q = 0; q < d; ++q) av += a(j, q) * w.v(q, c);
          acc += scores(i, j) / denom * av;
        }
        want(i, c) = acc;
      }
    }

    const Matrix got = attention_forward(a, w, AttentionKind::poly, beta);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        CHECK(rel_err(got(i, c), want(i, c)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("attention_forward: softmax kind matches a naive exp oracle") {
  Rng rng(59);
  const std::size_t n = 5, d = 3;
  const Matrix a = random_matrix(rng, n, d, -1.0, 1.0);
  const AttentionWeights w{random_matrix(rng, d, d, -0.5, 0.5),
                           Matrix::identity(d)};
  const Matrix got = attention_forward(a, w, AttentionKind::softmax);
  for (std::size_t i = 0; i < n; ++i) {
    Vector u(n);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double z = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
          z += a(i, p) * w.qk(p, q) * a(j, q);
        }
      }
      u[j] = std::exp(z);
      denom += u[j];
    }
    for (std::size_t c = 0; c < d; ++c) {
      double want = 0.0;
      for (std::size_t j = 0; j < n; ++j) want += u[j] / denom * a(j, c);
      CHECK(rel_err(got(i, c), want) <= 1e-12);
    }
  }
}

TEST_CASE("attention_forward: mixing rows are stochastic") {
  // With V = I and a constant column in A, the mixed output reproduces that
  // constant exactly iff each mixing row sums to 1.
  Rng rng(61);
  const std::size_t n = 6, d = 3;
  Matrix a = random_matrix(rng, n, d, 0.2, 2.0);
  for (std::size_t i = 0; i < n; ++i) a(i, 0) = 1.7;
  const AttentionWeights w{random_matrix(rng, d, d, 0.1, 1.0),
                           Matrix::identity(d)};
  for (const AttentionKind kind : {AttentionKind::poly, AttentionKind::softmax}) {
    const Matrix out = attention_forward(a, w, kind, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(rel_err(out(i, 0), 1.7) <= 1e-12);
    }
  }

  // A zero value matrix annihilates the output entirely.
  const AttentionWeights wz{w.qk, Matrix(d, d, 0.0)};
  const Matrix zero = attention_forward(a, wz, AttentionKind::poly, 3.0);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("attention_forward: rejects nonpositive pre-activations for poly") {
  Matrix a(2, 1);
  a(0, 0) = 1.0;
  a(1, 0) = -1.0;
  AttentionWeights w{Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)};
  CHECK_THROWS_AS(attention_forward(a, w, AttentionKind::poly, 2.0),
                  std::domain_error);
  CHECK_NOTHROW(attention_forward(a, w, AttentionKind::softmax));
}

TEST_CASE("tensor_trick_discrepancy: scalar and structured cases") {
  AttentionWeights w1{Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)};
  CHECK(tensor_trick_discrepancy(Matrix(1, 1, 2.0), Matrix(1, 1, 2.0), w1,
                                 2.0) == 0.0);

  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  const Matrix a = materialize(inst);
  const AttentionWeights w = AttentionWeights::ones_identity(5);
  CHECK(tensor_trick_discrepancy(a, a, w, 4.0) <= 1e-12);
}

TEST_CASE("tensor_trick_discrepancy: size guard") {
  Matrix a(200, 8, 1.0);
  const AttentionWeights w = AttentionWeights::ones_identity(8);
  CHECK_THROWS_AS(tensor_trick_discrepancy(a, a, w, 2.0), std::length_error);
}
