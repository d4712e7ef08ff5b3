#include <cmath>

#include "doctest.h"
#include "gated_instances.hpp"
#include "polyattn/experiments.hpp"

using namespace polyattn;

namespace {

SelfAttnInstance figure_instance(Label label, double a) {
  return build_selfattn_instance(9, 5, 3, 1, a, 0.5, 0.5, label);
}

RegimeConfig make_config(Regime regime, double beta) {
  RegimeConfig rc;
  rc.regime = regime;
  rc.beta = beta;
  return rc;
}

}  // namespace

TEST_CASE("hoeffding_bound: direct evaluation") {
  const std::pair<double, double> one[] = {{-1.0, 1.0}};
  CHECK(rel_err(hoeffding_bound(one, 2.0), 2.0 * std::exp(-2.0)) <= 1e-15);
  CHECK(hoeffding_bound(one, 50.0) <= 1e-300);
  // Halving the squared range sum strictly tightens a nontrivial bound.
  const std::pair<double, double> half[] = {{-0.5, 0.5}, {-0.5, 0.5}};
  CHECK(hoeffding_bound(half, 2.0) < hoeffding_bound(one, 2.0));
}

TEST_CASE("hoeffding_bound: argument errors") {
  const std::pair<double, double> one[] = {{-1.0, 1.0}};
  CHECK_THROWS_AS(
      hoeffding_bound(std::span<const std::pair<double, double>>{}, 1.0),
      std::invalid_argument);
  CHECK_THROWS_AS(hoeffding_bound(one, 0.0), std::domain_error);
  const std::pair<double, double> bad[] = {{1.0, -1.0}};
  CHECK_THROWS_AS(hoeffding_bound(bad, 1.0), std::invalid_argument);
}

TEST_CASE("check_attention_entries: high-regime d1 on the 9x5 instance") {
  const ExperimentReport r = check_attention_entries(
      figure_instance(Label::d1, 1.0), 4.0, make_config(Regime::high_beta, 4.0));
  CHECK(r.passed);
  CHECK(r.body.at("pairs_checked").get<std::size_t>() == 81);
}

TEST_CASE("check_attention_entries: gate failure names the inequality") {
  // (a+1)^beta = 4 < n = 9.
  CHECK_THROWS_WITH_AS(
      check_attention_entries(figure_instance(Label::d1, 1.0), 2.0,
                              make_config(Regime::high_beta, 2.0)),
      doctest::Contains("(a+1)^beta >= n"), gate_error);
}

TEST_CASE("check_attention_entries: perturbed data fails") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  Matrix m = materialize(inst);
  m(4, 2) += 1e-3;
  const ExperimentReport r = check_attention_entries(
      inst, 4.0, make_config(Regime::high_beta, 4.0), &m);
  CHECK(!r.passed);
}

TEST_CASE("check_attention_entries: all four regime gates on random tuples") {
  Rng rng(101);
  for (const Regime regime : {Regime::high_beta, Regime::low_beta}) {
    for (const Label label : {Label::d0, Label::d1}) {
      for (int rep = 0; rep < 10; ++rep) {
        const testing::GatedTuple g = testing::sample_gated(regime, label, rng);
        const ExperimentReport r = check_attention_entries(
            g.inst, g.beta, make_config(regime, g.beta));
        CHECK(r.passed);
      }
    }
  }
}

TEST_CASE("check_attention_entries: d0 high regime at n = 1024") {
  // (1.05)^11 = 1.71 <= 1024^0.2 = 4, so every weight must stay below
  // n^(c0-1) <= n^(-0.8).
  const SelfAttnInstance inst =
      build_selfattn_instance(1024, 34, 32, 100, 0.05, 0.5, 0.5, Label::d0);
  RegimeConfig rc = make_config(Regime::high_beta, 11.0);
  const ExperimentReport r = check_attention_entries(inst, 11.0, rc);
  CHECK(r.passed);
  CHECK(r.body.at("config").at("c0").get<double>() < 0.2);

  const AttentionWeights w = AttentionWeights::ones_identity(34);
  const double cap = std::pow(1024.0, -0.8);
  for (std::size_t j0 : {std::size_t{0}, std::size_t{100}}) {
    const BlockAttention row = block_attention(inst, w, j0, 11.0);
    for (std::size_t j1 = 0; j1 < 1024; ++j1) {
      CHECK(row.weights[j1] <= cap);
    }
  }
}

TEST_CASE("check_attention_entries: supplied c0 must dominate") {
  const SelfAttnInstance inst = figure_instance(Label::d0, 0.05);
  RegimeConfig rc = make_config(Regime::high_beta, 4.0);
  rc.c0 = 0.01;  // (1.05)^4 = 1.2155 > 9^0.01
  CHECK_THROWS_AS(check_attention_entries(inst, 4.0, rc), gate_error);
  rc.c0 = 0.15;
  CHECK(check_attention_entries(inst, 4.0, rc).passed);
}

TEST_CASE("check_context_bounds: both labels, both regimes, random tuples") {
  Rng rng(103);
  for (const Regime regime : {Regime::high_beta, Regime::low_beta}) {
    for (const Label label : {Label::d0, Label::d1}) {
      for (int rep = 0; rep < 6; ++rep) {
        const testing::GatedTuple g = testing::sample_gated(regime, label, rng);
        const ExperimentReport r =
            check_context_bounds(g.inst, g.beta, make_config(regime, g.beta));
        CHECK(r.passed);
      }
    }
  }
}

TEST_CASE("check_context_bounds: worked 9x5 d1 case") {
  const ExperimentReport r = check_context_bounds(
      figure_instance(Label::d1, 1.0), 4.0, make_config(Regime::high_beta, 4.0));
  CHECK(r.passed);
  CHECK(r.body.at("rows_checked").get<std::size_t>() == 9);
}

TEST_CASE("concentration_score: d0 Hoeffding comparison and d1 lower bound") {
  RegimeConfig rc = make_config(Regime::high_beta, 4.0);
  rc.trials = 2000;
  rc.master_seed = 2024;
  const ScoreVector d0 = sample_score(1024, Label::d0, 555);
  const ExperimentReport r0 = concentration_score(d0, 4.0, rc);
  CHECK(r0.passed);

  const ScoreVector d1 = sample_score(1024, Label::d1, 556);
  const ExperimentReport r1 = concentration_score(d1, 4.0, rc);
  CHECK(r1.passed);
  // The spike weight exceeds 1/2, so the >= 1/3 event fires roughly half the
  // time; the report must show at least the claimed 1/4.
  const double rate = r1.body.at("clauses")[0].at("empirical").get<double>();
  CHECK(rate >= 0.4);
  CHECK(rate <= 0.6);
}

TEST_CASE("sign_column_count: pinned values") {
  CHECK(sign_column_count(1024, 0.01, 10.0) == 167);
  CHECK(sign_column_count(65536, 0.01, 10.0) == 227);
}

TEST_CASE("concentration_score: uniform scores give the closed-form bound") {
  // All entries equal: weights are exactly 1/n, so the t = 0.1 bound is
  // 2 exp(-2 * 0.01 / (4/n)) = 2 exp(-5.12) at n = 1024.
  ScoreVector s;
  s.n = 1024;
  s.label = Label::d0;
  s.entries = Vector(1024, 2.0);
  RegimeConfig rc = make_config(Regime::high_beta, 4.0);
  rc.trials = 200;
  rc.master_seed = 1;
  const ExperimentReport r = concentration_score(s, 4.0, rc);
  const double hb = r.body.at("clauses")[0].at("hoeffding").get<double>();
  CHECK(rel_err(hb, 2.0 * std::exp(-5.12)) <= 1e-12);
}

TEST_CASE("concentration_score: d1 low band") {
  RegimeConfig rc = make_config(Regime::low_beta, 0.05);
  rc.trials = 2000;
  rc.master_seed = 7;
  const ScoreVector d1 = sample_score(1024, Label::d1, 557);
  CHECK(concentration_score(d1, 0.05, rc).passed);
}

TEST_CASE("concentration_score: band gate failure") {
  RegimeConfig rc = make_config(Regime::high_beta, 2.0);
  rc.trials = 10;
  const ScoreVector d1 = sample_score(1024, Label::d1, 558);
  // beta = 2 sits between the low band (0, 0.1) and high band (3.33, 4.9).
  CHECK_THROWS_AS(concentration_score(d1, 2.0, rc), gate_error);
}

TEST_CASE("concentration_selfattn: d1 high regime fires at rate >= 1/10") {
  RegimeConfig rc = make_config(Regime::high_beta, 4.0);
  rc.trials = 2000;
  rc.master_seed = 11;
  const ExperimentReport r =
      concentration_selfattn(figure_instance(Label::d1, 1.0), 4.0, rc);
  CHECK(r.passed);
  // True rate is 9/32 for this instance.
  const double rate = r.body.at("clauses")[0].at("empirical").get<double>();
  CHECK(rate >= 0.22);
  CHECK(rate <= 0.34);
}

TEST_CASE("concentration_selfattn: d0 high regime with wide d concentrates") {
  // n = 128 = (130-2)*1: the block coordinates are ~b/128 each so the
  // non-constant fluctuation stays below 0.1 with large probability.
  const SelfAttnInstance inst =
      build_selfattn_instance(128, 130, 1, 40, 0.05, 0.5, 0.5, Label::d0);
  RegimeConfig rc = make_config(Regime::high_beta, 7.0);
  rc.trials = 3000;
  rc.master_seed = 13;
  const ExperimentReport r = concentration_selfattn(inst, 7.0, rc);
  CHECK(r.passed);
}

TEST_CASE("concentration_selfattn: lin regime sqrt(log n) threshold") {
  // n = 16: the threshold (c+0.1) sqrt(log2 16) = 1.2 exceeds the total
  // context mass (about 1.05), so the within event holds on every draw.
  const SelfAttnInstance inst =
      build_selfattn_instance(16, 6, 4, 3, 0.7, 0.5, 0.5, Label::d1);
  RegimeConfig rc = make_config(Regime::low_beta, 0.4);
  rc.trials = 500;
  rc.master_seed = 17;
  const ExperimentReport r = concentration_selfattn(inst, 0.4, rc);
  CHECK(r.passed);
  CHECK(r.body.at("clauses")[0].at("empirical").get<double>() == 1.0);
}

TEST_CASE("separation_experiment: score four-cell table at n = 1024") {
  SeparationConfig cfg;
  cfg.dataset = "score";
  cfg.sizes = {SizeSpec{1024, 0, 0}};
  cfg.beta_high = 4.0;
  cfg.beta_low = 0.05;
  cfg.tau_fixed = true;
  cfg.tau_value = 0.2;
  cfg.trials = 30;
  cfg.master_seed = 99;
  cfg.threads = 2;
  const ExperimentReport r = separation_experiment(cfg);
  CHECK(r.passed);
  REQUIRE(r.body.at("cells").size() == 4);
  for (const auto& cell : r.body.at("cells")) {
    const bool positive_cell =
        cell.at("regime") == "high" && cell.at("label") == "d1";
    if (positive_cell) {
      CHECK(cell.at("rate_F_positive").get<double>() == 1.0);
    } else {
      CHECK(cell.at("rate_F_zero").get<double>() == 1.0);
    }
    CHECK(cell.at("m").get<std::size_t>() == 167);
  }
}

TEST_CASE("separation_experiment: gate failure surfaces as gate_error") {
  SeparationConfig cfg;
  cfg.dataset = "score";
  cfg.sizes = {SizeSpec{1024, 0, 0}};
  cfg.beta_high = 9.0;  // outside (log(n)/3, 0.45 log(n)) = (3.33, 4.5)
  cfg.regimes = {Regime::high_beta};
  cfg.trials = 5;
  cfg.master_seed = 1;
  CHECK_THROWS_AS(separation_experiment(cfg), gate_error);
}

TEST_CASE("separation_experiment: selfattn high regime under both thresholds") {
  SeparationConfig cfg;
  cfg.dataset = "selfattn";
  cfg.sizes = {SizeSpec{1024, 34, 32}};
  cfg.regimes = {Regime::high_beta};
  cfg.beta_high = 11.0;
  cfg.a0 = 0.05;
  cfg.a1 = 1.0;
  cfg.tau_fixed = false;
  cfg.tau_margin = 0.1;
  cfg.trials = 20;
  cfg.master_seed = 4242;
  cfg.threads = 2;

  // Plain threshold tau = c + 0.1: the d1 cell fires on every trial.
  const ExperimentReport plain = separation_experiment(cfg);
  REQUIRE(plain.body.at("cells").size() == 2);
  for (const auto& cell : plain.body.at("cells")) {
    CHECK(rel_err(cell.at("tau").get<double>(), 0.6) <= 1e-12);
    if (cell.at("label") == "d1") {
      CHECK(cell.at("rate_F_positive").get<double>() == 1.0);
      CHECK(cell.at("pass").get<bool>());
    }
  }

  // Scaled threshold tau = (c + 0.1) sqrt(log2 n) = 1.897: every context
  // inner product is below it (their total mass is about 1.67), so both
  // labels go exactly to zero. That silences the d1 positive cell too.
  cfg.tau_sqrt_log = true;
  const ExperimentReport scaled = separation_experiment(cfg);
  for (const auto& cell : scaled.body.at("cells")) {
    CHECK(rel_err(cell.at("tau").get<double>(), 0.6 * std::sqrt(10.0)) <=
          1e-12);
    if (cell.at("label") == "d0") {
      CHECK(cell.at("rate_F_zero").get<double>() == 1.0);
      CHECK(cell.at("pass").get<bool>());
    } else {
      CHECK(cell.at("rate_F_positive").get<double>() == 0.0);
      CHECK(!cell.at("pass").get<bool>());
    }
  }
  CHECK(!scaled.passed);
}

TEST_CASE("separation_experiment: deterministic body across thread counts") {
  SeparationConfig cfg;
  cfg.dataset = "selfattn";
  cfg.sizes = {SizeSpec{512, 34, 16}};
  cfg.regimes = {Regime::high_beta};
  cfg.beta_high = 11.0;
  cfg.tau_fixed = false;
  cfg.tau_sqrt_log = true;
  cfg.trials = 12;
  cfg.master_seed = 31415;
  cfg.threads = 1;
  const std::string one = separation_experiment(cfg).deterministic_dump();
  cfg.threads = 5;
  const std::string five = separation_experiment(cfg).deterministic_dump();
  CHECK(one == five);
}

TEST_CASE("separation_experiment: replayed instance is used for every trial") {
  const SelfAttnInstance inst = figure_instance(Label::d1, 1.0);
  SeparationConfig cfg;
  cfg.dataset = "selfattn";
  cfg.sizes = {SizeSpec{9, 5, 3}};
  cfg.regimes = {Regime::high_beta};
  cfg.beta_high = 4.0;
  cfg.tau_fixed = false;
  cfg.trials = 8;
  cfg.master_seed = 5;
  cfg.replay = to_json(inst);
  const ExperimentReport r = separation_experiment(cfg);
  // Only the d1 cell remains; the replay label filters the others.
  CHECK(r.body.at("cells").size() == 1);
  CHECK(r.body.at("cells")[0].at("label") == "d1");
}

TEST_CASE("sweep_beta: grid shape and payload") {
  SeparationConfig cfg;
  cfg.dataset = "score";
  cfg.sizes = {SizeSpec{64, 0, 0}};
  cfg.trials = 10;
  cfg.master_seed = 8;
  const ExperimentReport r = sweep_beta(cfg, 0.05, 0.5, 5);
  REQUIRE(r.body.at("sweep").size() == 10);  // 5 betas x 2 labels
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  std::size_t lines = 0;
  for (char ch : csv.str()) {
    if (ch == '\n') ++lines;
  }
  CHECK(lines == 11);  // header + rows
}

TEST_CASE("trials CSV: one row per trial per cell") {
  SeparationConfig cfg;
  cfg.dataset = "score";
  cfg.sizes = {SizeSpec{1024, 0, 0}};
  cfg.regimes = {Regime::low_beta};
  cfg.beta_low = 0.05;
  cfg.trials = 7;
  cfg.master_seed = 9;
  const ExperimentReport r = separation_experiment(cfg);
  std::ostringstream csv;
  write_trials_csv(csv, r);
  std::size_t lines = 0;
  for (char ch : csv.str()) {
    if (ch == '\n') ++lines;
  }
  CHECK(lines == 1 + 2 * 7);
}
