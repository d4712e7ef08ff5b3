#pragma once

// Command line front end. Subcommands: gen-dataset, check-lemma,
// run-separation, sweep-beta. Exit codes: 0 success, 2 invalid
// config/validation/gate failure, 3 check-clause failure (report still
// written), 1 internal error.

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "polyattn/experiments.hpp"

namespace polyattn {

namespace cli_detail {

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write " + path);
  out << content;
}

inline void emit_report(const ExperimentReport& report,
                        const std::string& out_path, std::ostream& out) {
  if (!out_path.empty()) {
    write_text_file(out_path, report.full().dump(2) + "\n");
  } else {
    out << report.full().dump(2) << "\n";
  }
}

struct TauSpec {
  bool fixed = true;
  double value = 0.2;
  double margin = 0.1;
  bool sqrt_log = false;
};

inline void reject_unknown_keys(const json& j,
                                const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw validation_error("unknown key in " + where + ": " + item.key());
    }
  }
}

inline TauSpec parse_tau(const json& j) {
  reject_unknown_keys(j, {"mode", "value", "margin", "sqrt_log"}, "tau");
  TauSpec tau;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "fixed") {
    tau.fixed = true;
    tau.value = j.at("value").get<double>();
  } else if (mode == "c_plus_margin") {
    tau.fixed = false;
    tau.margin = j.value("margin", 0.1);
  } else {
    throw validation_error("tau.mode must be fixed or c_plus_margin");
  }
  tau.sqrt_log = j.value("sqrt_log", false);
  return tau;
}

// Run configuration schema (schema_version 1). Unknown keys are rejected.
// Sweeps supply their own beta grid, so the per-regime beta keys are only
// demanded for plain separation runs.
inline SeparationConfig parse_run_config(const json& j,
                                         bool for_sweep = false) {
  reject_unknown_keys(
      j,
      {"schema_version", "dataset", "sizes", "regimes", "beta_high",
       "beta_low", "a0", "a1", "b", "c", "tau", "m_constant", "delta",
       "trials", "master_seed", "rate_threshold", "log_base", "threads",
       "instance"},
      "run config");
  if (j.value("schema_version", -1) != kSchemaVersion) {
    throw validation_error("run config needs schema_version = 1");
  }
  SeparationConfig cfg;
  cfg.dataset = j.at("dataset").get<std::string>();
  const bool selfattn = cfg.dataset == "selfattn";

  for (const auto& s : j.at("sizes")) {
    SizeSpec spec;
    if (s.is_number_unsigned() || s.is_number_integer()) {
      spec.n = s.get<std::size_t>();
      if (selfattn) {
        throw validation_error("selfattn sizes need objects {n, d, t}");
      }
    } else {
      reject_unknown_keys(s, {"n", "d", "t"}, "sizes entry");
      spec.n = s.at("n").get<std::size_t>();
      spec.d = s.value("d", std::size_t{0});
      spec.t = s.value("t", std::size_t{0});
    }
    cfg.sizes.push_back(spec);
  }

  if (j.contains("regimes")) {
    cfg.regimes.clear();
    for (const auto& r : j.at("regimes")) {
      cfg.regimes.push_back(regime_from_string(r.get<std::string>()));
    }
  }
  if (!for_sweep) {
    for (const Regime r : cfg.regimes) {
      const char* key = r == Regime::high_beta ? "beta_high" : "beta_low";
      if (!j.contains(key)) {
        throw validation_error(std::string("missing ") + key +
                               " for requested regime");
      }
    }
  }
  cfg.beta_high = j.value("beta_high", cfg.beta_high);
  cfg.beta_low = j.value("beta_low", cfg.beta_low);
  cfg.a0 = j.value("a0", cfg.a0);
  cfg.a1 = j.value("a1", cfg.a1);
  cfg.b = j.value("b", cfg.b);
  cfg.c = j.value("c", cfg.c);

  TauSpec tau;
  if (j.contains("tau")) {
    tau = parse_tau(j.at("tau"));
  } else {
    tau.fixed = !selfattn;  // selfattn default: tau = c + 0.1
  }
  cfg.tau_fixed = tau.fixed;
  cfg.tau_value = tau.value;
  cfg.tau_margin = tau.margin;
  cfg.tau_sqrt_log = tau.sqrt_log;

  cfg.m_constant = j.value("m_constant", cfg.m_constant);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.trials = j.at("trials").get<std::size_t>();
  if (!j.contains("master_seed")) {
    throw validation_error(
        "master_seed is required; seeding is never time-based");
  }
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  cfg.rate_threshold = j.value("rate_threshold", cfg.rate_threshold);
  cfg.log_base = j.value("log_base", cfg.log_base);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("instance")) {
    cfg.replay = load_json_file(j.at("instance").get<std::string>());
  }
  validate(cfg);
  return cfg;
}

struct GridSpec {
  double start = 0.0;
  double step = 0.0;
  std::size_t count = 0;
};

inline GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  std::istringstream in(text);
  char c1 = 0, c2 = 0;
  if (!(in >> g.start >> c1 >> g.step >> c2 >> g.count) || c1 != ':' ||
      c2 != ':' || !in.eof()) {
    throw validation_error("grid must be start:step:count, e.g. 0.05:0.5:11");
  }
  return g;
}

struct LemmaId {
  std::string family;  // p4 | s5 | s6-f | s6-c | s6-random
  Regime regime = Regime::high_beta;
  Label label = Label::d0;
};

inline LemmaId parse_lemma_id(const std::string& id) {
  const auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return id.size() >= s.size() &&
           id.compare(id.size() - s.size(), s.size(), s) == 0;
  };
  LemmaId out;
  if (id == "p4-d0") return {"p4", Regime::high_beta, Label::d0};
  if (id == "p4-d1") return {"p4", Regime::high_beta, Label::d1};
  if (id == "s5-high") return {"s5", Regime::high_beta, Label::d0};
  if (id == "s5-low") return {"s5", Regime::low_beta, Label::d0};
  if (id.rfind("s6-f-", 0) == 0) {
    out.family = "s6-f";
  } else if (id.rfind("s6-c-", 0) == 0) {
    out.family = "s6-c";
  } else if (id.rfind("s6-random-", 0) == 0) {
    out.family = "s6-random";
  } else {
    throw validation_error("unknown lemma id: " + id);
  }
  if (id.find("-exp-") != std::string::npos) {
    out.regime = Regime::high_beta;
  } else if (id.find("-lin-") != std::string::npos) {
    out.regime = Regime::low_beta;
  } else {
    throw validation_error("lemma id needs exp or lin: " + id);
  }
  if (ends_with("-d0")) {
    out.label = Label::d0;
  } else if (ends_with("-d1")) {
    out.label = Label::d1;
  } else {
    throw validation_error("lemma id needs d0 or d1 suffix: " + id);
  }
  return out;
}

}  // namespace cli_detail

// Parses and runs one invocation. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"polynomial attention separation toolkit"};
  app.require_subcommand(1);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "generate an instance file");
  std::string gen_kind, gen_label_str = "d0", gen_out, gen_csv;
  std::size_t gen_n = 0, gen_d = 0, gen_t = 0;
  long long gen_j3 = -1;
  double gen_a = 0.05, gen_b = 0.5, gen_c = 0.5;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--kind", gen_kind, "score | selfattn")->required();
  gen->add_option("--n", gen_n)->required();
  gen->add_option("--label", gen_label_str, "d0 | d1")->required();
  gen->add_option("--seed", gen_seed, "64-bit seed (required when sampling)");
  gen->add_option("--d", gen_d);
  gen->add_option("--t", gen_t);
  gen->add_option("--j3", gen_j3, "1-based spike row (sampled if absent)");
  gen->add_option("--a", gen_a);
  gen->add_option("--b", gen_b);
  gen->add_option("--c", gen_c);
  gen->add_option("--out", gen_out, "output JSON path")->required();
  gen->add_option("--csv", gen_csv, "also export the materialized matrix");

  // check-lemma
  auto* check = app.add_subcommand("check-lemma", "run one lemma checker");
  std::string chk_id, chk_instance, chk_out;
  std::size_t chk_n = 0, chk_d = 0, chk_t = 0, chk_trials = 10000;
  long long chk_j3 = 1;
  double chk_a = 0.0, chk_b = 0.5, chk_c = 0.5, chk_beta = 0.0;
  double chk_log_base = 2.0, chk_rate = 0.95, chk_bound_c = 1.0;
  double chk_tau = 0.2, chk_delta = 0.01;
  std::optional<double> chk_c0;
  std::optional<std::uint64_t> chk_seed;
  unsigned chk_threads = 1;
  check->add_option("--id", chk_id, "lemma id, e.g. s6-f-exp-d1")->required();
  check->add_option("--instance", chk_instance, "instance JSON to replay");
  check->add_option("--n", chk_n);
  check->add_option("--d", chk_d);
  check->add_option("--t", chk_t);
  check->add_option("--j3", chk_j3, "1-based spike row");
  check->add_option("--a", chk_a);
  check->add_option("--b", chk_b);
  check->add_option("--c", chk_c);
  check->add_option("--beta", chk_beta)->required();
  check->add_option("--c0", chk_c0, "override the derived c0 exponent");
  check->add_option("--log-base", chk_log_base);
  check->add_option("--tau", chk_tau, "threshold for s5 checks");
  check->add_option("--delta", chk_delta);
  check->add_option("--trials", chk_trials);
  check->add_option("--seed", chk_seed);
  check->add_option("--rate-threshold", chk_rate);
  check->add_option("--bound-constant", chk_bound_c);
  check->add_option("--threads", chk_threads);
  check->add_option("--out", chk_out, "report JSON path");

  // run-separation
  auto* sep = app.add_subcommand("run-separation",
                                 "four-cell separation experiment");
  std::string sep_config, sep_out, sep_csv, sep_grid;
  std::optional<unsigned> sep_threads;
  sep->add_option("--config", sep_config, "run config JSON")->required();
  sep->add_option("--out", sep_out, "report JSON path");
  sep->add_option("--csv", sep_csv, "per-trial CSV path");
  sep->add_option("--threads", sep_threads, "override config threads");
  sep->add_option("--sweep-beta", sep_grid,
                  "start:step:count; emit the beta sweep instead");

  // sweep-beta
  auto* sweep = app.add_subcommand("sweep-beta", "positive-rate beta sweep");
  std::string sweep_config, sweep_out, sweep_csv, sweep_grid;
  std::optional<unsigned> sweep_threads;
  sweep->add_option("--config", sweep_config, "run config JSON")->required();
  sweep->add_option("--grid,--sweep-beta", sweep_grid, "start:step:count")
      ->required();
  sweep->add_option("--csv", sweep_csv, "sweep CSV path");
  sweep->add_option("--out", sweep_out, "report JSON path");
  sweep->add_option("--threads", sweep_threads);

  std::vector<std::string> argv_store;
  argv_store.push_back("polyattn");
  for (const auto& a : args) argv_store.push_back(a);
  std::vector<char*> argv;
  argv.reserve(argv_store.size());
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      json doc;
      Matrix materialized(1, 1);
      bool have_matrix = false;
      if (gen_kind == "score") {
        if (!gen_seed) {
          throw validation_error("--seed is required for score sampling");
        }
        const ScoreVector s =
            sample_score(gen_n, label_from_string(gen_label_str), *gen_seed);
        doc = to_json(s);
        if (!gen_csv.empty()) {
          materialized = realize_matrix(s, 1).a;
          have_matrix = true;
        }
      } else if (gen_kind == "selfattn") {
        SelfAttnInstance inst;
        if (gen_j3 >= 1) {
          inst = build_selfattn_instance(
              gen_n, gen_d, gen_t, static_cast<std::size_t>(gen_j3) - 1,
              gen_a, gen_b, gen_c, label_from_string(gen_label_str));
          inst.seed = gen_seed.value_or(0);
        } else {
          if (!gen_seed) {
            throw validation_error(
                "--seed is required when --j3 is not given");
          }
          inst = sample_selfattn(gen_n, gen_d, gen_t, gen_a, gen_b, gen_c,
                                 label_from_string(gen_label_str), *gen_seed);
        }
        doc = to_json(inst);
        if (!gen_csv.empty()) {
          materialized = materialize(inst);
          have_matrix = true;
        }
      } else {
        throw validation_error("--kind must be score or selfattn");
      }
      cli_detail::write_text_file(gen_out, doc.dump(2) + "\n");
      if (have_matrix) {
        std::ostringstream csv;
        write_matrix_csv(csv, materialized);
        cli_detail::write_text_file(gen_csv, csv.str());
      }
      POLYATTN_INFO("wrote %s", gen_out.c_str());
      return 0;
    }

    if (check->parsed()) {
      const cli_detail::LemmaId id = cli_detail::parse_lemma_id(chk_id);

      RegimeConfig rc;
      rc.regime = id.regime;
      rc.beta = chk_beta;
      rc.c0 = chk_c0;
      rc.log_base = chk_log_base;
      rc.delta = chk_delta;
      rc.trials = chk_trials;
      rc.rate_threshold = chk_rate;
      rc.bound_constant = chk_bound_c;
      rc.threads = chk_threads;

      ExperimentReport report;
      if (id.family == "p4") {
        if (chk_n < 2) throw validation_error("p4 checks need --n");
        if (!chk_seed) throw validation_error("--seed is required");
        rc.master_seed = derive_seed(*chk_seed, 1);
        ScoreVector target =
            chk_instance.empty()
                ? sample_score(chk_n, id.label,
                               derive_seed(*chk_seed, 0))
                : score_from_json(cli_detail::load_json_file(chk_instance));
        if (target.label != id.label) {
          throw validation_error("instance label does not match lemma id");
        }
        report = concentration_score(target, chk_beta, rc);
      } else if (id.family == "s5") {
        if (chk_n < 2) throw validation_error("s5 checks need --n");
        if (!chk_seed) throw validation_error("--seed is required");
        SeparationConfig cfg;
        cfg.dataset = "score";
        cfg.sizes.push_back(SizeSpec{chk_n, 0, 0});
        cfg.regimes = {id.regime};
        cfg.beta_high = cfg.beta_low = chk_beta;
        cfg.tau_fixed = true;
        cfg.tau_value = chk_tau;
        cfg.delta = chk_delta;
        cfg.trials = chk_trials;
        cfg.master_seed = *chk_seed;
        cfg.rate_threshold = chk_rate;
        cfg.log_base = chk_log_base;
        cfg.threads = chk_threads;
        report = separation_experiment(cfg);
      } else {
        SelfAttnInstance inst;
        if (!chk_instance.empty()) {
          inst = selfattn_from_json(cli_detail::load_json_file(chk_instance));
        } else {
          if (chk_j3 < 1) throw validation_error("1 <= j3 <= n");
          inst = build_selfattn_instance(
              chk_n, chk_d, chk_t, static_cast<std::size_t>(chk_j3) - 1,
              chk_a, chk_b, chk_c, id.label);
        }
        if (inst.label != id.label) {
          throw validation_error("instance label does not match lemma id");
        }
        if (id.family == "s6-f") {
          report = check_attention_entries(inst, chk_beta, rc);
        } else if (id.family == "s6-c") {
          report = check_context_bounds(inst, chk_beta, rc);
        } else {
          if (!chk_seed) throw validation_error("--seed is required");
          rc.master_seed = *chk_seed;
          report = concentration_selfattn(inst, chk_beta, rc);
        }
      }
      cli_detail::emit_report(report, chk_out, out);
      return report.passed ? 0 : 3;
    }

    if (sep->parsed()) {
      SeparationConfig cfg = cli_detail::parse_run_config(
          cli_detail::load_json_file(sep_config), !sep_grid.empty());
      if (sep_threads) cfg.threads = *sep_threads;

      if (!sep_grid.empty()) {
        const cli_detail::GridSpec g = cli_detail::parse_grid(sep_grid);
        const ExperimentReport report =
            sweep_beta(cfg, g.start, g.step, g.count);
        if (!sep_csv.empty()) {
          std::ostringstream csv;
          write_sweep_csv(csv, report);
          cli_detail::write_text_file(sep_csv, csv.str());
        }
        cli_detail::emit_report(report, sep_out, out);
        return 0;
      }

      const ExperimentReport report = separation_experiment(cfg);
      if (!sep_csv.empty()) {
        std::ostringstream csv;
        write_trials_csv(csv, report);
        cli_detail::write_text_file(sep_csv, csv.str());
      }
      if (!sep_out.empty()) {
        for (const auto& cell : report.body.at("cells")) {
          out << strfmt(
              "cell n=%zu regime=%s label=%s rate_F_positive=%.4f "
              "rate_F_zero=%.4f expected=%s %s\n",
              cell.at("n").get<std::size_t>(),
              cell.at("regime").get<std::string>().c_str(),
              cell.at("label").get<std::string>().c_str(),
              cell.at("rate_F_positive").get<double>(),
              cell.at("rate_F_zero").get<double>(),
              cell.at("expected").get<std::string>().c_str(),
              cell.at("pass").get<bool>() ? "pass" : "FAIL");
        }
      }
      cli_detail::emit_report(report, sep_out, out);
      return report.passed ? 0 : 3;
    }

    if (sweep->parsed()) {
      SeparationConfig cfg = cli_detail::parse_run_config(
          cli_detail::load_json_file(sweep_config), true);
      if (sweep_threads) cfg.threads = *sweep_threads;
      const cli_detail::GridSpec g = cli_detail::parse_grid(sweep_grid);
      const ExperimentReport report =
          sweep_beta(cfg, g.start, g.step, g.count);
      if (!sweep_csv.empty()) {
        std::ostringstream csv;
        write_sweep_csv(csv, report);
        cli_detail::write_text_file(sweep_csv, csv.str());
      }
      cli_detail::emit_report(report, sweep_out, out);
      return 0;
    }
  } catch (const gate_error& e) {
    err << "gate failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    err << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const std::length_error& e) {
    err << "size error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    err << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "invalid JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace polyattn
