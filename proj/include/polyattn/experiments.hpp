#pragma once

// Seeded Monte Carlo experiments: sign-vector concentration against Hoeffding
// predictions, the four-cell separation table, and the beta sweep.
//
// Trials are independent; trial i draws all of its randomness from seeds
// derived as splitmix64(master ^ stream ^ i)-style chains, and results land
// in slot i of a preallocated array, so outputs are identical at any worker
// count.

#include <charconv>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "polyattn/verification.hpp"

namespace polyattn {

namespace detail {

inline std::string double_str(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Concentration on score vectors

// Draws cfg.trials sign vectors and tallies the concentration events for the
// target's label:
//   d0      : |<f, sigma>| stays within 0.1; the exceedance frequency is
//             compared against the Hoeffding bound at t = 0.1 plus a 3-sigma
//             binomial allowance. The within-0.1 rate clause is active only
//             when beta < 0.2 log(n).
//   d1 high : <f, sigma> >= 1/3 with frequency >= 1/4
//             (band log(n)/3 < beta < 0.49 log(n)).
//   d1 low  : |<f, sigma>| within C*sqrt(log(n/delta)/n)*16^beta
//             (band 0 < beta < 0.01 log(n)).
inline ExperimentReport concentration_score(const ScoreVector& s, double beta,
                                            const RegimeConfig& cfg) {
  detail::Stopwatch sw;
  validate(s);
  validate(cfg);
  const double n = static_cast<double>(s.n);
  const double logn = log_b(cfg.log_base, n);

  enum class Mode { d0, d1_low, d1_high };
  Mode mode = Mode::d0;
  GateList gates;
  if (s.label == Label::d0) {
    gates.require(beta > 0.0, strfmt("beta > 0 (beta = %g)", beta));
  } else if (beta > logn / 3.0 && beta < 0.49 * logn) {
    mode = Mode::d1_high;
    gates.require(true, strfmt("beta in (log(n)/3, 0.49 log(n)) "
                               "(%g < %g < %g)",
                               logn / 3.0, beta, 0.49 * logn));
  } else if (beta > 0.0 && beta < 0.01 * logn) {
    mode = Mode::d1_low;
    gates.require(true, strfmt("beta in (0, 0.01 log(n)) (%g < %g)", beta,
                               0.01 * logn));
  } else {
    gates.require(false,
                  strfmt("beta in (0, 0.01 log(n)) or (log(n)/3, 0.49 "
                         "log(n)) (beta = %g, log(n) = %g)",
                         beta, logn));
  }
  gates.enforce();

  const ProbVector f = score_attention(s, beta).weights;
  std::vector<double> dots(cfg.trials);
  parallel_for_index(cfg.trials, cfg.threads, [&](std::size_t trial) {
    const SignMatrix sigma =
        sample_signs(s.n, 1, derive_seed(cfg.master_seed, trial));
    dots[trial] = dot_signs(f.values(), sigma.column(0));
  });

  const auto rate_of = [&](auto&& pred) {
    std::size_t count = 0;
    for (double v : dots) {
      if (pred(v)) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(cfg.trials);
  };

  ExperimentReport report;
  report.body["schema_version"] = kSchemaVersion;
  report.body["check"] = "concentration-score";
  report.body["instance"] = to_json(s);
  report.body["config"] = {{"beta", beta},
                           {"log_base", cfg.log_base},
                           {"trials", cfg.trials},
                           {"master_seed", cfg.master_seed},
                           {"rate_threshold", cfg.rate_threshold},
                           {"bound_constant", cfg.bound_constant}};
  report.body["gates"] = gates.to_json();

  if (mode == Mode::d0) {
    const double hb = hoeffding_bound_signed(f.values(), 0.1);
    const double allowance = detail::binomial_allowance(hb, cfg.trials);
    const double exceed = rate_of([](double v) { return std::abs(v) > 0.1; });
    detail::add_clause(report,
                       "Pr[|<f,sigma>| > 0.1] <= hoeffding(0.1) + 3sigma",
                       exceed <= hb + allowance,
                       {{"empirical", exceed},
                        {"hoeffding", hb},
                        {"allowance", allowance}});
    if (beta < 0.2 * logn) {
      detail::add_clause(
          report, "Pr[|<f,sigma>| <= 0.1] >= rate_threshold",
          1.0 - exceed >= cfg.rate_threshold,
          {{"empirical", 1.0 - exceed}, {"claimed", "1 - delta/poly(n)"}});
    } else {
      report.body["notes"] = json::array(
          {strfmt("within-0.1 rate clause inactive: beta = %g outside "
                  "(0, 0.2 log(n)) = (0, %g)",
                  beta, 0.2 * logn)});
    }
  } else if (mode == Mode::d1_high) {
    const double rate = rate_of([](double v) { return v >= 1.0 / 3.0; });
    detail::add_clause(report, "Pr[<f,sigma> >= 1/3] >= 1/4", rate >= 0.25,
                       {{"empirical", rate}, {"claimed", 0.25}});
  } else {
    const double bound = cfg.bound_constant *
                         std::sqrt(log_b(cfg.log_base, n / cfg.delta) / n) *
                         std::pow(16.0, beta);
    const double hb = hoeffding_bound_signed(f.values(), bound);
    const double allowance = detail::binomial_allowance(hb, cfg.trials);
    const double within =
        rate_of([bound](double v) { return std::abs(v) <= bound; });
    detail::add_clause(
        report,
        "Pr[|<f,sigma>| <= C sqrt(log(n/delta)/n) 16^beta] >= rate_threshold",
        within >= cfg.rate_threshold,
        {{"empirical", within}, {"bound_value", bound}});
    detail::add_clause(report, "exceedance <= hoeffding(bound) + 3sigma",
                       1.0 - within <= hb + allowance,
                       {{"empirical", 1.0 - within},
                        {"hoeffding", hb},
                        {"allowance", allowance}});
  }
  detail::finish_report(report, sw);
  return report;
}

// ---------------------------------------------------------------------------
// Concentration on structured instances

// Sign vectors live in R^d here. Only two distinct context rows exist under
// an all-ones weight product, so both are tallied.
//   high d1: Pr[<ctx, sigma> >= c + 0.1] >= 1/10 for both row types.
//   high d0: Pr[|<ctx, sigma>| <  c + 0.1] >= rate_threshold.
//   low    : Pr[|<ctx, sigma>| < (c + 0.1) sqrt(log n)] >= rate_threshold.
inline ExperimentReport concentration_selfattn(const SelfAttnInstance& inst,
                                               double beta,
                                               const RegimeConfig& cfg) {
  detail::Stopwatch sw;
  validate(inst);
  validate(cfg);

  GateList gates;
  selfattn_gates(gates, inst, beta, cfg, true);
  gates.enforce();

  const AttentionWeights w = AttentionWeights::ones_identity(inst.d);
  const Vector ctx_spike =
      context_row(inst, w, inst.spike_row, beta, PathMode::structured);
  const std::size_t other_row = inst.spike_row == 0 ? 1 : 0;
  const Vector ctx_base =
      inst.n > 1
          ? context_row(inst, w, other_row, beta, PathMode::structured)
          : ctx_spike;

  std::vector<double> dot_spike(cfg.trials);
  std::vector<double> dot_base(cfg.trials);
  parallel_for_index(cfg.trials, cfg.threads, [&](std::size_t trial) {
    const SignMatrix sigma =
        sample_signs(inst.d, 1, derive_seed(cfg.master_seed, trial));
    dot_spike[trial] = dot_signs(ctx_spike, sigma.column(0));
    dot_base[trial] = dot_signs(ctx_base, sigma.column(0));
  });

  const bool high = cfg.regime == Regime::high_beta;
  const bool d1 = inst.label == Label::d1;
  const double logn = log_b(cfg.log_base, static_cast<double>(inst.n));
  const double margin = inst.c + 0.1;
  const double threshold = high ? margin : margin * std::sqrt(logn);

  ExperimentReport report;
  report.body["schema_version"] = kSchemaVersion;
  report.body["check"] = "concentration-selfattn";
  report.body["instance"] = to_json(inst);
  report.body["config"] = {{"beta", beta},
                           {"regime", to_string(cfg.regime)},
                           {"log_base", cfg.log_base},
                           {"trials", cfg.trials},
                           {"master_seed", cfg.master_seed},
                           {"rate_threshold", cfg.rate_threshold},
                           {"threshold", threshold}};
  report.body["gates"] = gates.to_json();

  const auto rate_of = [&](const std::vector<double>& dots, auto&& pred) {
    std::size_t count = 0;
    for (double v : dots) {
      if (pred(v)) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(cfg.trials);
  };

  const auto row_clause = [&](const char* row_name,
                              const std::vector<double>& dots,
                              const Vector& ctx) {
    if (high && d1) {
      const double rate =
          rate_of(dots, [&](double v) { return v >= threshold; });
      // Informational: Hoeffding tail of the coordinates outside the three
      // heavy ones (first, special block, last), which must stay below 0.1
      // for the heavy-coordinate sign pattern to carry the event.
      Vector rest;
      const std::size_t special = inst.special_block_col();
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        if (i != 0 && i != special && i + 1 != ctx.size()) {
          rest.push_back(ctx[i]);
        }
      }
      const double hb =
          rest.empty() ? 0.0 : hoeffding_bound_signed(rest, 0.1);
      detail::add_clause(
          report, strfmt("%s: Pr[<ctx,sigma> >= c+0.1] >= 1/10", row_name),
          rate >= 0.1,
          {{"empirical", rate},
           {"claimed", 0.1},
           {"hoeffding_rest_exceeds_0.1", hb}});
      return;
    }
    const double within =
        rate_of(dots, [&](double v) { return std::abs(v) < threshold; });
    detail::add_clause(
        report,
        strfmt("%s: Pr[|<ctx,sigma>| < %s] >= rate_threshold", row_name,
               high ? "c+0.1" : "(c+0.1) sqrt(log n)"),
        within >= cfg.rate_threshold,
        {{"empirical", within}, {"threshold", threshold}});
    // Exceeding the threshold forces the non-constant coordinates past
    // threshold - c; Hoeffding on those coordinates bounds that tail.
    const double slack = threshold - inst.c;
    if (slack > 0.0) {
      const std::span<const double> head(ctx.data(), ctx.size() - 1);
      const double hb = hoeffding_bound_signed(head, slack);
      const double allowance = detail::binomial_allowance(hb, cfg.trials);
      detail::add_clause(report,
                         strfmt("%s: exceedance <= hoeffding + 3sigma",
                                row_name),
                         1.0 - within <= hb + allowance,
                         {{"empirical", 1.0 - within},
                          {"hoeffding", hb},
                          {"allowance", allowance}});
    }
  };

  row_clause("spike row", dot_spike, ctx_spike);
  if (inst.n > 1) row_clause("other rows", dot_base, ctx_base);
  detail::finish_report(report, sw);
  return report;
}

// ---------------------------------------------------------------------------
// Separation experiments

struct SizeSpec {
  std::size_t n = 0;
  std::size_t d = 0;  // selfattn only
  std::size_t t = 0;  // selfattn only
};

struct SeparationConfig {
  std::string dataset = "score";  // "score" | "selfattn"
  std::vector<SizeSpec> sizes;
  std::vector<Regime> regimes{Regime::high_beta, Regime::low_beta};
  double beta_high = 4.0;
  double beta_low = 0.05;
  double a0 = 0.05;
  double a1 = 1.0;
  double b = 0.5;
  double c = 0.5;
  bool tau_fixed = true;      // fixed tau_value, else c + tau_margin
  double tau_value = 0.2;
  double tau_margin = 0.1;
  bool tau_sqrt_log = false;  // scale tau by sqrt(log(n))
  double m_constant = 10.0;
  double delta = 0.01;
  std::size_t trials = 100;
  std::uint64_t master_seed = 1;
  double rate_threshold = 0.95;
  double log_base = 2.0;
  unsigned threads = 1;
  std::optional<json> replay;  // fixed instance document, fresh signs per trial
};

inline void validate(const SeparationConfig& cfg) {
  if (cfg.dataset != "score" && cfg.dataset != "selfattn") {
    throw validation_error("dataset must be score or selfattn");
  }
  if (cfg.sizes.empty()) throw validation_error("sizes must be nonempty");
  if (cfg.regimes.empty()) throw validation_error("regimes must be nonempty");
  if (cfg.trials < 1) throw validation_error("trials >= 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 0.1)) {
    throw validation_error("delta in (0, 0.1)");
  }
  if (!(cfg.m_constant > 1.0)) throw validation_error("m_constant > 1");
  if (!(cfg.log_base > 1.0)) throw validation_error("log_base > 1");
  for (const SizeSpec& s : cfg.sizes) {
    if (s.n < 2) throw validation_error("size n >= 2");
    if (cfg.dataset == "selfattn" && (s.d < 3 || s.t < 1)) {
      throw validation_error("selfattn sizes need d >= 3 and t >= 1");
    }
  }
}

inline double resolve_tau(const SeparationConfig& cfg, std::size_t n) {
  double tau = cfg.tau_fixed ? cfg.tau_value : cfg.c + cfg.tau_margin;
  if (cfg.tau_sqrt_log) {
    tau *= std::sqrt(log_b(cfg.log_base, static_cast<double>(n)));
  }
  return tau;
}

namespace detail {

inline void score_cell_gates(GateList& gates, Regime regime, double beta,
                             double logn) {
  if (regime == Regime::high_beta) {
    gates.require(beta > logn / 3.0 && beta < 0.45 * logn,
                  strfmt("beta in (log(n)/3, 0.45 log(n)) (%g < %g < %g)",
                         logn / 3.0, beta, 0.45 * logn));
  } else {
    gates.require(beta > 0.0 && beta < 0.01 * logn,
                  strfmt("beta in (0, 0.01 log(n)) (0 < %g < %g)", beta,
                         0.01 * logn));
  }
}

}  // namespace detail

// Runs every (size, regime, label) cell: each trial draws a fresh instance
// and a fresh sign matrix, evaluates the readout, and the cell tallies how
// often it is positive versus exactly zero. High-regime d1 cells expect
// positives; every other cell expects zeros.
inline ExperimentReport separation_experiment(const SeparationConfig& cfg) {
  detail::Stopwatch sw;
  validate(cfg);
  const bool selfattn = cfg.dataset == "selfattn";

  std::optional<ScoreVector> replay_score;
  std::optional<SelfAttnInstance> replay_inst;
  if (cfg.replay) {
    if (selfattn) {
      replay_inst = selfattn_from_json(*cfg.replay);
    } else {
      replay_score = score_from_json(*cfg.replay);
    }
  }

  ExperimentReport report;
  report.body["schema_version"] = kSchemaVersion;
  report.body["check"] = "separation";
  report.body["config"] = {{"dataset", cfg.dataset},
                           {"beta_high", cfg.beta_high},
                           {"beta_low", cfg.beta_low},
                           {"trials", cfg.trials},
                           {"m_constant", cfg.m_constant},
                           {"delta", cfg.delta},
                           {"master_seed", cfg.master_seed},
                           {"rate_threshold", cfg.rate_threshold},
                           {"log_base", cfg.log_base},
                           {"tau_sqrt_log", cfg.tau_sqrt_log}};
  report.body["notes"] = json::array();
  if (selfattn) {
    report.body["notes"].push_back(
        "high-regime zero-output cells draw d0 instances");
  }
  report.body["cells"] = json::array();

  for (std::size_t size_idx = 0; size_idx < cfg.sizes.size(); ++size_idx) {
    const SizeSpec& size = cfg.sizes[size_idx];
    const double logn =
        log_b(cfg.log_base, static_cast<double>(size.n));
    for (const Regime regime : cfg.regimes) {
      const double beta =
          regime == Regime::high_beta ? cfg.beta_high : cfg.beta_low;
      for (const Label label : {Label::d0, Label::d1}) {
        if (cfg.replay) {
          const Label replay_label =
              selfattn ? replay_inst->label : replay_score->label;
          if (label != replay_label) continue;
        }
        const double a = label == Label::d1 ? cfg.a1 : cfg.a0;

        GateList gates;
        RegimeConfig rc;
        rc.regime = regime;
        rc.beta = beta;
        rc.log_base = cfg.log_base;
        rc.delta = cfg.delta;
        if (selfattn) {
          const SelfAttnInstance prototype =
              replay_inst ? *replay_inst
                          : build_selfattn_instance(size.n, size.d, size.t, 0,
                                                    a, cfg.b, cfg.c, label);
          selfattn_gates(gates, prototype, beta, rc, true);
          gates.require(prototype.d <= prototype.n,
                        strfmt("d <= n (%zu <= %zu)", prototype.d,
                               prototype.n));
        } else {
          detail::score_cell_gates(gates, regime, beta, logn);
        }
        gates.enforce();

        const double tau = resolve_tau(cfg, size.n);
        const std::size_t m =
            sign_column_count(size.n, cfg.delta, cfg.m_constant);
        const NetworkParams params{tau, m, beta, cfg.delta};
        const std::uint64_t stream =
            size_idx * 4 + (regime == Regime::high_beta ? 0 : 2) +
            (label == Label::d1 ? 1 : 0);

        std::vector<double> values(cfg.trials);
        std::vector<std::uint64_t> seeds(cfg.trials);
        parallel_for_index(cfg.trials, cfg.threads, [&](std::size_t trial) {
          const std::uint64_t seed =
              derive_seed(cfg.master_seed, stream, trial);
          seeds[trial] = seed;
          const std::uint64_t inst_seed = derive_seed(seed, 0);
          const std::uint64_t sign_seed = derive_seed(seed, 1);
          if (selfattn) {
            const SelfAttnInstance inst =
                replay_inst ? *replay_inst
                            : sample_selfattn(size.n, size.d, size.t, a,
                                              cfg.b, cfg.c, label, inst_seed);
            const SignMatrix y = sample_signs(size.d, m, sign_seed);
            values[trial] = readout_selfattn(
                inst, AttentionWeights::ones_identity(size.d), y, params);
          } else {
            const ScoreVector s =
                replay_score ? *replay_score
                             : sample_score(size.n, label, inst_seed);
            const SignMatrix y = sample_signs(size.n, m, sign_seed);
            values[trial] = readout_score(s, y, params);
          }
        });

        std::size_t count_pos = 0;
        for (double v : values) {
          if (v > 0.0) ++count_pos;
        }
        const double rate_pos =
            static_cast<double>(count_pos) / static_cast<double>(cfg.trials);
        const double rate_zero = 1.0 - rate_pos;
        const bool expect_positive =
            regime == Regime::high_beta && label == Label::d1;
        const bool pass = expect_positive ? rate_pos >= cfg.rate_threshold
                                          : rate_zero >= cfg.rate_threshold;
        report.passed = report.passed && pass;
        POLYATTN_INFO(
            "cell n=%zu regime=%s label=%s beta=%g tau=%g m=%zu: "
            "rate_F_positive=%.4f (%s)",
            size.n, to_string(regime), to_string(label), beta, tau, m,
            rate_pos, pass ? "pass" : "fail");

        json cell{{"n", size.n},
                  {"regime", to_string(regime)},
                  {"label", to_string(label)},
                  {"beta", beta},
                  {"tau", tau},
                  {"m", m},
                  {"trials", cfg.trials},
                  {"count_F_positive", count_pos},
                  {"rate_F_positive", rate_pos},
                  {"rate_F_zero", rate_zero},
                  {"expected", expect_positive ? "F>0" : "F=0"},
                  {"pass", pass},
                  {"gates", gates.to_json()},
                  {"F_values", values},
                  {"trial_seeds", seeds}};
        if (selfattn) {
          cell["d"] = size.d;
          cell["t"] = size.t;
          cell["a"] = a;
          cell["b"] = cfg.b;
          cell["c"] = cfg.c;
        }
        report.body["cells"].push_back(std::move(cell));
      }
    }
  }
  detail::finish_report(report, sw);
  return report;
}

// Rate of positive readouts per (beta, label) over a grid. Descriptive: no
// regime gates apply, tau comes from the config, only sizes[0] is used.
inline ExperimentReport sweep_beta(const SeparationConfig& cfg, double start,
                                   double step, std::size_t count) {
  detail::Stopwatch sw;
  validate(cfg);
  if (count < 1) throw validation_error("sweep needs count >= 1");
  if (!(start >= 0.0) || !(step >= 0.0)) {
    throw validation_error("sweep needs start >= 0 and step >= 0");
  }
  const bool selfattn = cfg.dataset == "selfattn";
  const SizeSpec size = cfg.sizes.front();
  const double tau = resolve_tau(cfg, size.n);
  const std::size_t m = sign_column_count(size.n, cfg.delta, cfg.m_constant);

  ExperimentReport report;
  report.body["schema_version"] = kSchemaVersion;
  report.body["check"] = "sweep-beta";
  report.body["config"] = {{"dataset", cfg.dataset}, {"n", size.n},
                           {"tau", tau},             {"m", m},
                           {"trials", cfg.trials},   {"start", start},
                           {"step", step},           {"count", count},
                           {"master_seed", cfg.master_seed}};
  report.body["sweep"] = json::array();

  for (std::size_t k = 0; k < count; ++k) {
    const double beta = start + static_cast<double>(k) * step;
    for (const Label label : {Label::d0, Label::d1}) {
      const double a = label == Label::d1 ? cfg.a1 : cfg.a0;
      const NetworkParams params{tau, m, beta, cfg.delta};
      const std::uint64_t stream = k * 2 + (label == Label::d1 ? 1 : 0);
      std::vector<double> values(cfg.trials);
      parallel_for_index(cfg.trials, cfg.threads, [&](std::size_t trial) {
        const std::uint64_t seed = derive_seed(cfg.master_seed, stream, trial);
        const std::uint64_t inst_seed = derive_seed(seed, 0);
        const std::uint64_t sign_seed = derive_seed(seed, 1);
        if (selfattn) {
          const SelfAttnInstance inst = sample_selfattn(
              size.n, size.d, size.t, a, cfg.b, cfg.c, label, inst_seed);
          const SignMatrix y = sample_signs(size.d, m, sign_seed);
          values[trial] = readout_selfattn(
              inst, AttentionWeights::ones_identity(size.d), y, params);
        } else {
          const ScoreVector s = sample_score(size.n, label, inst_seed);
          const SignMatrix y = sample_signs(size.n, m, sign_seed);
          values[trial] = readout_score(s, y, params);
        }
      });
      std::size_t count_pos = 0;
      for (double v : values) {
        if (v > 0.0) ++count_pos;
      }
      report.body["sweep"].push_back(
          json{{"beta", beta},
               {"label", to_string(label)},
               {"rate_F_positive", static_cast<double>(count_pos) /
                                       static_cast<double>(cfg.trials)}});
    }
  }
  detail::finish_report(report, sw);
  return report;
}

// ---------------------------------------------------------------------------
// CSV emission (UTF-8, comma separated, '.' decimals, header row)

inline void write_trials_csv(std::ostream& os, const ExperimentReport& r) {
  os << "trial_index,label,regime,F_value,seed\n";
  for (const auto& cell : r.body.at("cells")) {
    const auto& values = cell.at("F_values");
    const auto& seeds = cell.at("trial_seeds");
    const std::string label = cell.at("label").get<std::string>();
    const std::string regime = cell.at("regime").get<std::string>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      os << i << ',' << label << ',' << regime << ','
         << detail::double_str(values[i].get<double>()) << ','
         << seeds[i].get<std::uint64_t>() << '\n';
    }
  }
}

inline void write_sweep_csv(std::ostream& os, const ExperimentReport& r) {
  os << "beta,label,rate_F_positive\n";
  for (const auto& row : r.body.at("sweep")) {
    os << detail::double_str(row.at("beta").get<double>()) << ','
       << row.at("label").get<std::string>() << ','
       << detail::double_str(row.at("rate_F_positive").get<double>()) << '\n';
  }
}

}  // namespace polyattn
