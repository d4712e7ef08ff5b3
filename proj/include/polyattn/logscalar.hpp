#pragma once

// Sign + log-magnitude scalars. Entrywise powers like s^beta overflow double
// precision long before the normalized quantities they feed do, so powers are
// carried as beta*ln(s) and only exponentiated after the row maximum has been
// subtracted.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "polyattn/common.hpp"
#include "polyattn/matrix.hpp"

namespace polyattn {

struct LogScalar {
  int sign = 0;  // -1, 0 or +1
  double logmag = -std::numeric_limits<double>::infinity();

  static LogScalar zero() { return LogScalar{}; }

  static LogScalar from_value(double v) {
    check_finite(v, "LogScalar value");
    if (v == 0.0) return LogScalar{};
    return LogScalar{v > 0.0 ? 1 : -1, std::log(std::abs(v))};
  }

  static LogScalar positive(double logmag) { return LogScalar{1, logmag}; }

  // May overflow to +-inf when the magnitude exceeds double range.
  double value() const {
    if (sign == 0) return 0.0;
    return static_cast<double>(sign) * std::exp(logmag);
  }
};

inline LogScalar operator*(const LogScalar& a, const LogScalar& b) {
  if (a.sign == 0 || b.sign == 0) return LogScalar::zero();
  return LogScalar{a.sign * b.sign, a.logmag + b.logmag};
}

using LogVector = std::vector<LogScalar>;

// Entrywise v_i^beta for strictly positive v, carried in the log domain.
inline LogVector pow_log(const Vector& v, double beta) {
  check_finite(beta, "beta");
  if (beta < 0.0) throw std::domain_error("pow_log: beta must be >= 0");
  LogVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    check_finite(v[i], "pow_log entry");
    if (v[i] <= 0.0) {
      throw std::domain_error("pow_log: entries must be strictly positive");
    }
    out[i] = LogScalar::positive(beta * std::log(v[i]));
  }
  return out;
}

// log(sum_i exp(l_i)) over positive log-domain entries, max-subtracted.
inline LogScalar log_sum(const LogVector& entries) {
  if (entries.empty()) throw std::invalid_argument("log_sum: empty input");
  double max_log = -std::numeric_limits<double>::infinity();
  for (const LogScalar& e : entries) {
    if (e.sign < 0) {
      throw std::domain_error("log_sum: entries must be nonnegative");
    }
    if (e.sign > 0 && e.logmag > max_log) max_log = e.logmag;
  }
  if (!std::isfinite(max_log)) return LogScalar::zero();
  KahanSum sum;
  for (const LogScalar& e : entries) {
    if (e.sign > 0) sum.add(std::exp(e.logmag - max_log));
  }
  return LogScalar::positive(max_log + std::log(sum.value()));
}

// exp-normalizes a positive log-domain vector into weights summing to 1.
// The first maximal entry anchors the shift; compensated sums keep the total
// within a few ulps of 1 at any length.
inline Vector normalized_exp(const LogVector& entries) {
  if (entries.empty()) {
    throw std::invalid_argument("normalized_exp: empty input");
  }
  double max_log = -std::numeric_limits<double>::infinity();
  for (const LogScalar& e : entries) {
    if (e.sign <= 0) {
      throw std::domain_error("normalized_exp: entries must be positive");
    }
    if (e.logmag > max_log) max_log = e.logmag;
  }
  Vector out(entries.size());
  KahanSum denom;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out[i] = std::exp(entries[i].logmag - max_log);
    denom.add(out[i]);
  }
  const double total = denom.value();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::domain_error("normalized_exp: degenerate normalizer");
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace polyattn
