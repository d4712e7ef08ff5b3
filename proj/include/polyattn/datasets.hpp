#pragma once

// The two synthetic dataset families.
//
// Score vectors: length-n positive vectors with entries in [2,4]; a d1 vector
// additionally carries one entry pinned to exactly 32 (the spike).
//
// Structured instances: n x d matrices built from three column blocks, with
// n = (d-2)*t. Column 0 holds a at one row (the spike row) and 0 elsewhere,
// columns 1..d-2 are t vertically stacked copies of b*I_{d-2}, and the last
// column is constant c. The constraint b + c = 1 makes every row sum equal 1,
// except the spike row whose sum is 1 + a. Instances are kept structural and
// materialized on demand; the dense form is capped at n <= 4096 rows.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "polyattn/common.hpp"
#include "polyattn/matrix.hpp"
#include "polyattn/rng.hpp"

namespace polyattn {

enum class Label { d0, d1 };

inline const char* to_string(Label label) {
  return label == Label::d0 ? "d0" : "d1";
}

inline Label label_from_string(const std::string& s) {
  if (s == "d0" || s == "D0") return Label::d0;
  if (s == "d1" || s == "D1") return Label::d1;
  throw validation_error("label must be d0 or d1");
}

inline constexpr std::size_t kDenseRowCap = 4096;
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Score vectors

struct ScoreVector {
  std::size_t n = 0;
  Vector entries;
  std::optional<std::size_t> spike_index;  // 0-based
  Label label = Label::d0;
  std::uint64_t seed = 0;
};

inline void validate(const ScoreVector& s) {
  if (s.n < 2) throw validation_error("score vector needs n >= 2");
  if (s.entries.size() != s.n) {
    throw validation_error("score vector entry count != n");
  }
  for (std::size_t i = 0; i < s.n; ++i) {
    const double v = s.entries[i];
    check_finite(v, "score entry");
    const bool is_spike = s.spike_index && *s.spike_index == i;
    if (is_spike) {
      if (v != 32.0) throw validation_error("spike entry must equal 32");
    } else if (v < 2.0 || v > 4.0) {
      throw validation_error("non-spike score entries must lie in [2, 4]");
    }
  }
  if (s.label == Label::d0 && s.spike_index) {
    throw validation_error("d0 score vectors carry no spike");
  }
  if (s.label == Label::d1 && !s.spike_index) {
    throw validation_error("d1 score vectors carry exactly one spike");
  }
}

// Entries i.i.d. uniform on [2,4]; a d1 draw then overwrites one uniformly
// chosen position with exactly 32.
inline ScoreVector sample_score(std::size_t n, Label label,
                                std::uint64_t seed) {
  if (n < 2) throw validation_error("score vector needs n >= 2");
  Rng rng(seed);
  ScoreVector s;
  s.n = n;
  s.label = label;
  s.seed = seed;
  s.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.entries[i] = rng.next_uniform(2.0, 4.0);
  if (label == Label::d1) {
    const std::size_t j = rng.next_index(n);
    s.entries[j] = 32.0;
    s.spike_index = j;
  }
  validate(s);
  return s;
}

struct RealizedPair {
  Matrix a;
  Vector x;
};

// Canonical witness (A, x) with A*x == s exactly: the scores sit in column 0
// and x = e_1.
inline RealizedPair realize_matrix(const ScoreVector& s, std::size_t d) {
  if (d < 1) throw validation_error("realize_matrix needs d >= 1");
  RealizedPair out{Matrix(s.n, d, 0.0), Vector(d, 0.0)};
  for (std::size_t i = 0; i < s.n; ++i) out.a(i, 0) = s.entries[i];
  out.x[0] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Structured instances

struct SelfAttnInstance {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t t = 0;
  std::size_t spike_row = 0;  // 0-based
  double a = 0.0;
  double b = 0.5;
  double c = 0.5;
  Label label = Label::d0;
  std::uint64_t seed = 0;

  double row_sum(std::size_t i) const {
    return (i == spike_row ? a : 0.0) + b + c;
  }

  // Identity-block column (0-based, in [1, d-2]) whose support contains the
  // spike row.
  std::size_t special_block_col() const { return 1 + spike_row % (d - 2); }

  // Rows carrying value b in block column col (col in [1, d-2]).
  // They are col-1, col-1+(d-2), ..., i.e. t rows with stride d-2.
  std::size_t block_support_row(std::size_t col, std::size_t k) const {
    return (col - 1) + k * (d - 2);
  }
};

inline void validate(const SelfAttnInstance& inst) {
  if (inst.d < 3) throw validation_error("d >= 3");
  if (inst.t < 1) throw validation_error("t >= 1");
  if (inst.n != (inst.d - 2) * inst.t) throw validation_error("n = (d-2)*t");
  if (inst.spike_row >= inst.n) throw validation_error("1 <= j3 <= n");
  check_finite(inst.a, "a");
  check_finite(inst.b, "b");
  check_finite(inst.c, "c");
  if (std::abs(inst.b + inst.c - 1.0) > 1e-12) {
    throw validation_error("b + c = 1");
  }
  if (inst.b < 0.1) throw validation_error("b >= 0.1");
  if (inst.c < 0.1) throw validation_error("c >= 0.1");
  if (inst.label == Label::d0 && !(inst.a > 0.0 && inst.a < 0.1)) {
    throw validation_error("d0 requires a in (0, 0.1)");
  }
  if (inst.label == Label::d1 && !(inst.a >= 0.7)) {
    throw validation_error("d1 requires a >= 0.7");
  }
}

// spike_row is 0-based here; the CLI and file formats use the 1-based j3.
inline SelfAttnInstance build_selfattn_instance(std::size_t n, std::size_t d,
                                                std::size_t t,
                                                std::size_t spike_row, double a,
                                                double b, double c,
                                                Label label) {
  SelfAttnInstance inst{n, d, t, spike_row, a, b, c, label, 0};
  validate(inst);
  return inst;
}

// Fresh instance with the spike row drawn uniformly from the seed.
inline SelfAttnInstance sample_selfattn(std::size_t n, std::size_t d,
                                        std::size_t t, double a, double b,
                                        double c, Label label,
                                        std::uint64_t seed) {
  Rng rng(seed);
  if (n == 0) throw validation_error("n = (d-2)*t");
  SelfAttnInstance inst{n, d, t, rng.next_index(n), a, b, c, label, seed};
  validate(inst);
  return inst;
}

inline Matrix materialize(const SelfAttnInstance& inst) {
  if (inst.n > kDenseRowCap) {
    throw std::length_error(
        strfmt("dense materialization capped at n <= %zu", kDenseRowCap));
  }
  Matrix m(inst.n, inst.d, 0.0);
  m(inst.spike_row, 0) = inst.a;
  for (std::size_t col = 1; col + 1 < inst.d; ++col) {
    for (std::size_t k = 0; k < inst.t; ++k) {
      m(inst.block_support_row(col, k), col) = inst.b;
    }
  }
  for (std::size_t i = 0; i < inst.n; ++i) m(i, inst.d - 1) = inst.c;
  return m;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const ScoreVector& s) {
  return nlohmann::json{{"schema_version", kSchemaVersion},
                        {"kind", "score"},
                        {"params", {{"n", s.n}}},
                        {"seed", s.seed},
                        {"label", to_string(s.label)}};
}

inline nlohmann::json to_json(const SelfAttnInstance& inst) {
  return nlohmann::json{{"schema_version", kSchemaVersion},
                        {"kind", "selfattn"},
                        {"params",
                         {{"n", inst.n},
                          {"d", inst.d},
                          {"t", inst.t},
                          {"j3", inst.spike_row + 1},
                          {"a", inst.a},
                          {"b", inst.b},
                          {"c", inst.c}}},
                        {"seed", inst.seed},
                        {"label", to_string(inst.label)}};
}

inline std::string instance_kind(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("schema_version")) {
    throw validation_error("instance document needs kind and schema_version");
  }
  if (j.at("schema_version").get<int>() != kSchemaVersion) {
    throw validation_error("unsupported schema_version");
  }
  return j.at("kind").get<std::string>();
}

inline ScoreVector score_from_json(const nlohmann::json& j) {
  if (instance_kind(j) != "score") throw validation_error("kind != score");
  const auto& p = j.at("params");
  return sample_score(p.at("n").get<std::size_t>(),
                      label_from_string(j.at("label").get<std::string>()),
                      j.at("seed").get<std::uint64_t>());
}

inline SelfAttnInstance selfattn_from_json(const nlohmann::json& j) {
  if (instance_kind(j) != "selfattn") {
    throw validation_error("kind != selfattn");
  }
  const auto& p = j.at("params");
  const std::size_t j3 = p.at("j3").get<std::size_t>();
  if (j3 < 1) throw validation_error("1 <= j3 <= n");
  SelfAttnInstance inst{p.at("n").get<std::size_t>(),
                        p.at("d").get<std::size_t>(),
                        p.at("t").get<std::size_t>(),
                        j3 - 1,
                        p.at("a").get<double>(),
                        p.at("b").get<double>(),
                        p.at("c").get<double>(),
                        label_from_string(j.at("label").get<std::string>()),
                        j.value("seed", std::uint64_t{0})};
  validate(inst);
  return inst;
}

// Row-major CSV, one row per line, '.' decimal separator.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  os.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
}

}  // namespace polyattn
