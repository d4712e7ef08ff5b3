#pragma once

// Shared plumbing: error types, env-driven logging, compensated summation,
// tolerant comparisons, and the parallel trial loop used by the Monte Carlo
// drivers.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace polyattn {

// A dataset or config value violates a documented constraint. The message
// names the constraint, e.g. "b + c = 1".
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what)
      : std::invalid_argument(what) {}
};

// A regime precondition does not hold. The message states the failed
// inequality with both sides evaluated, e.g. "(a+1)^beta >= n (4 < 9)".
class gate_error : public std::invalid_argument {
 public:
  explicit gate_error(const std::string& what)
      : std::invalid_argument(what) {}
};

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from POLYATTN_LOG={error|info|debug}; read once.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("POLYATTN_LOG");
    if (env == nullptr) return LogLevel::error;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

inline void log_at(LogLevel lvl, const char* tag, const char* fmt, ...) {
  if (log_level() < lvl) return;
  std::fprintf(stderr, "[polyattn %s] ", tag);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

#define POLYATTN_INFO(...) ::polyattn::log_at(::polyattn::LogLevel::info, "info", __VA_ARGS__)
#define POLYATTN_DEBUG(...) ::polyattn::log_at(::polyattn::LogLevel::debug, "debug", __VA_ARGS__)

inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

// Kahan compensated accumulator. Keeps probability-vector sums within a few
// ulps of 1 independent of the vector length.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double kahan_total(std::span<const double> xs) {
  KahanSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

// |x - ref| relative to max(1, |ref|).
inline double rel_err(double x, double ref) {
  return std::abs(x - ref) / std::max(1.0, std::abs(ref));
}

// x <= bound up to a relative slack, for inequality clauses whose exact-real
// proof leaves no floating-point margin.
inline bool leq_tol(double x, double bound, double tol = 1e-12) {
  return x <= bound + tol * std::max(1.0, std::abs(bound));
}

inline bool geq_tol(double x, double bound, double tol = 1e-12) {
  return x >= bound - tol * std::max(1.0, std::abs(bound));
}

inline void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw validation_error(std::string(what) + " must be finite");
  }
}

// Runs body(i) for i in [0, count). Worker count only affects scheduling;
// each index is handled exactly once, so any writes keyed by index are
// placement-deterministic.
inline void parallel_for_index(std::size_t count, unsigned threads,
                               const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace polyattn
