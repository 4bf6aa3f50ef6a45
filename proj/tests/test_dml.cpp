#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "trendtest/dml.hpp"
#include "trendtest/rng.hpp"

using trendtest::DmlConfig;
using trendtest::PanelDataset;
using trendtest::Predictions;
using trendtest::Target;

namespace {

// 3 treated + 3 control units with hand-specified predictions; the expected
// statistic and scores below were worked out by hand before implementation:
//   odds(Y0,X) over controls: (1, 1/4, 4), normalized (4/21, 1/21, 16/21)
//   theta_1 = 2 + (4*1.5 - 0.5*1 + 16*0.5)/21 = 2 + 9/14
//   theta_2 = 1 + (1 - 1 + 3)/3            = 2
//   theta   = 9/14
//   psi     = (1, 2, 3, -2/7, 13/7, -26/7)
struct ToyCase {
  PanelDataset ds;
  Predictions preds;
};

ToyCase toy_case() {
  ToyCase t;
  t.ds.y0 = Eigen::VectorXd::Zero(6);
  t.ds.y1.resize(6);
  t.ds.y1 << 5, 6, 7, 2, 1, 3;
  t.ds.d.resize(6);
  t.ds.d << 1, 1, 1, 0, 0, 0;
  t.ds.X.resize(6, 0);
  t.preds.mu_y0x.resize(6);
  t.preds.mu_y0x << 1.0, 2.0, 3.0, 0.5, 1.5, 2.5;
  t.preds.mu_x.resize(6);
  t.preds.mu_x << 0.5, 1.0, 1.5, 1.0, 2.0, 0.0;
  t.preds.p_y0x.resize(6);
  t.preds.p_y0x << 0.3, 0.4, 0.6, 0.5, 0.2, 0.8;
  t.preds.p_x = Eigen::VectorXd::Constant(6, 0.5);
  return t;
}

PanelDataset random_panel(int n, int p, std::uint64_t seed) {
  trendtest::Rng rng(seed);
  PanelDataset ds;
  ds.y0.resize(n);
  ds.y1.resize(n);
  ds.d.resize(n);
  ds.X.resize(n, p);
  for (int j = 0; j < p; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) ds.X(i, j) = rng.normal();
    const double index = (p > 0 ? ds.X(i, 0) : 0.0) + rng.normal();
    ds.d[i] = index > 0.0 ? 1 : 0;
    ds.y0[i] = rng.normal();
    ds.y1[i] = ds.y0[i] + 0.5 * ds.d[i] + rng.normal();
  }
  ds.d[0] = 1;  // guarantee both classes
  ds.d[1] = 0;
  return ds;
}

}  // namespace

TEST_CASE("theta_scores matches the hand-computed toy statistic") {
  const ToyCase t = toy_case();
  const auto sv = trendtest::theta_scores(t.ds, t.preds, 0.99);
  REQUIRE(sv.n_trimmed == 0);
  REQUIRE(sv.retained.size() == 6);
  REQUIRE(sv.pr_d1 == 0.5);
  REQUIRE(sv.psi.mean() == Catch::Approx(9.0 / 14.0).margin(1e-12));
  const double expected_psi[6] = {1.0, 2.0, 3.0, -2.0 / 7.0, 13.0 / 7.0, -26.0 / 7.0};
  for (int i = 0; i < 6; ++i) {
    REQUIRE(sv.psi[i] == Catch::Approx(expected_psi[i]).margin(1e-12));
  }
}

TEST_CASE("trimming drops units whose either propensity exceeds the threshold") {
  ToyCase t = toy_case();
  t.preds.p_y0x[5] = 0.995;
  const auto sv = trendtest::theta_scores(t.ds, t.preds, 0.99);
  REQUIRE(sv.n_trimmed == 1);
  REQUIRE(std::find(sv.retained.begin(), sv.retained.end(), 5) == sv.retained.end());
  // recomputed by hand on the 5 remaining units
  REQUIRE(sv.psi.mean() == Catch::Approx(2.1).margin(1e-12));

  // the p(X) channel trims too
  ToyCase t2 = toy_case();
  t2.preds.p_x[4] = 1.0;  // also beyond any trim
  const auto sv2 = trendtest::theta_scores(t2.ds, t2.preds, 0.99);
  REQUIRE(sv2.n_trimmed == 1);
  REQUIRE(std::find(sv2.retained.begin(), sv2.retained.end(), 4) == sv2.retained.end());
}

TEST_CASE("equal nuisance pairs give exactly zero") {
  trendtest::Rng rng(11);
  PanelDataset ds = random_panel(50, 0, 12);
  Predictions preds;
  preds.mu_y0x.resize(50);
  preds.p_y0x.resize(50);
  for (int i = 0; i < 50; ++i) {
    preds.mu_y0x[i] = rng.normal();
    preds.p_y0x[i] = 0.1 + 0.8 * rng.uniform();
  }
  preds.mu_x = preds.mu_y0x;
  preds.p_x = preds.p_y0x;
  const auto sv = trendtest::theta_scores(ds, preds, 0.99);
  REQUIRE(sv.psi.mean() == 0.0);
  REQUIRE(sv.psi.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant nuisances give exactly zero theta") {
  const PanelDataset ds = random_panel(30, 0, 13);
  Predictions preds;
  preds.mu_y0x = Eigen::VectorXd::Constant(30, 1.7);
  preds.mu_x = Eigen::VectorXd::Constant(30, 1.7);
  preds.p_y0x = Eigen::VectorXd::Constant(30, 0.37);
  preds.p_x = Eigen::VectorXd::Constant(30, 0.37);
  const auto sv = trendtest::theta_scores(ds, preds, 0.99);
  REQUIRE(sv.psi.mean() == 0.0);
}

TEST_CASE("constant nuisances reduce the ATET to the plain DiD") {
  const PanelDataset ds = random_panel(40, 0, 14);
  Predictions preds;
  preds.mu_y0x = Eigen::VectorXd::Constant(40, -0.9);
  preds.mu_x = Eigen::VectorXd::Constant(40, -0.9);
  preds.p_y0x = Eigen::VectorXd::Constant(40, 0.5);
  preds.p_x = Eigen::VectorXd::Constant(40, 0.5);
  const auto sv = trendtest::atet_scores(ds, preds, 0.99);

  double mean1 = 0.0, mean0 = 0.0;
  int n1 = 0, n0 = 0;
  for (int i = 0; i < 40; ++i) {
    if (ds.d[i] == 1) {
      mean1 += ds.y1[i] - ds.y0[i];
      ++n1;
    } else {
      mean0 += ds.y1[i] - ds.y0[i];
      ++n0;
    }
  }
  const double plain_did = mean1 / n1 - mean0 / n0;
  REQUIRE(sv.psi.mean() == Catch::Approx(plain_did).margin(1e-12));
}

TEST_CASE("normalized weights sum to one within 1e-12") {
  trendtest::Rng rng(15);
  const PanelDataset ds = random_panel(200, 0, 16);
  Predictions preds;
  preds.mu_y0x.resize(200);
  preds.mu_x.resize(200);
  preds.p_y0x.resize(200);
  preds.p_x.resize(200);
  for (int i = 0; i < 200; ++i) {
    preds.mu_y0x[i] = rng.normal();
    preds.mu_x[i] = rng.normal();
    preds.p_y0x[i] = 0.05 + 0.9 * rng.uniform();
    preds.p_x[i] = 0.05 + 0.9 * rng.uniform();
  }
  const auto sv = trendtest::theta_scores(ds, preds, 0.99);

  // recompute the normalization from the retained controls
  double odds1 = 0.0, odds0 = 0.0;
  for (int unit : sv.retained) {
    if (ds.d[unit] == 0) {
      odds1 += preds.p_y0x[unit] / (1.0 - preds.p_y0x[unit]);
      odds0 += preds.p_x[unit] / (1.0 - preds.p_x[unit]);
    }
  }
  double w1_sum = 0.0, w0_sum = 0.0;
  for (int unit : sv.retained) {
    if (ds.d[unit] == 0) {
      w1_sum += preds.p_y0x[unit] / (1.0 - preds.p_y0x[unit]) / odds1;
      w0_sum += preds.p_x[unit] / (1.0 - preds.p_x[unit]) / odds0;
    }
  }
  REQUIRE(std::fabs(w1_sum - 1.0) <= 1e-12);
  REQUIRE(std::fabs(w0_sum - 1.0) <= 1e-12);
}

TEST_CASE("trim = 1.0 keeps every unit with propensity below one") {
  ToyCase t = toy_case();
  t.preds.p_y0x[0] = 1.0 - 1e-12;  // clamp boundary, still retained
  const auto sv = trendtest::theta_scores(t.ds, t.preds, 1.0);
  REQUIRE(sv.n_trimmed == 0);

  t.preds.p_y0x[4] = 1.0;  // a control at exactly one trips the guard
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, t.preds, 1.0), trendtest::NumericError);
}

TEST_CASE("score construction rejects degenerate retained sets") {
  ToyCase t = toy_case();
  t.preds.p_y0x = Eigen::VectorXd::Constant(6, 0.999);
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, t.preds, 0.99),
                    trendtest::ValidationError);  // everyone trimmed
  t = toy_case();
  t.preds.p_y0x[0] = t.preds.p_y0x[1] = t.preds.p_y0x[2] = 0.999;  // treated only
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, t.preds, 0.99),
                    trendtest::ValidationError);
}

TEST_CASE("crossfit predicts every unit exactly once out-of-fold") {
  const PanelDataset ds = random_panel(200, 3, 21);
  DmlConfig cfg;
  cfg.folds = 2;
  cfg.seed = 5;
  const auto cf = trendtest::crossfit(ds, cfg, Target::theta);
  REQUIRE(cf.nuisances.size() == 2);
  REQUIRE(cf.nuisances[0].fold_id == 0);
  REQUIRE(cf.nuisances[0].mu_y0x.has_value());
  REQUIRE(cf.preds.fold_of.size() == 200);
  std::vector<int> counts(2, 0);
  for (int f : cf.preds.fold_of) counts[static_cast<std::size_t>(f)]++;
  REQUIRE(counts[0] == 100);
  REQUIRE(counts[1] == 100);
  REQUIRE(cf.preds.mu_y0x.allFinite());
  REQUIRE(cf.preds.p_y0x.minCoeff() > 0.0);
  REQUIRE(cf.preds.p_y0x.maxCoeff() < 1.0);

  const auto cf_atet = trendtest::crossfit(ds, cfg, Target::atet);
  REQUIRE_FALSE(cf_atet.nuisances[0].mu_y0x.has_value());
  REQUIRE(cf_atet.preds.mu_y0x.size() == 0);
  // the shared nuisances agree with the theta run
  REQUIRE(cf_atet.preds.mu_x == cf.preds.mu_x);
  REQUIRE(cf_atet.preds.p_x == cf.preds.p_x);
}

TEST_CASE("crossfit refuses training folds that lose a class") {
  PanelDataset ds = random_panel(6, 0, 22);
  ds.d << 1, 0, 0, 0, 0, 0;  // single treated unit
  DmlConfig cfg;
  cfg.folds = 6;
  REQUIRE_THROWS_AS(trendtest::crossfit(ds, cfg, Target::theta), trendtest::FoldError);
  REQUIRE_THROWS_WITH(trendtest::crossfit(ds, cfg, Target::theta),
                      Catch::Matchers::ContainsSubstring("fewer folds"));
  cfg.folds = 12;
  REQUIRE_THROWS_AS(trendtest::crossfit(ds, cfg, Target::theta),
                    trendtest::ValidationError);  // more folds than units
}

TEST_CASE("empty covariate set degenerates to fold means and shares") {
  const PanelDataset ds = random_panel(60, 0, 23);
  DmlConfig cfg;
  cfg.folds = 2;
  cfg.seed = 9;
  const auto cf = trendtest::crossfit(ds, cfg, Target::theta);
  for (int fold = 0; fold < 2; ++fold) {
    double control_mean = 0.0, treated_share = 0.0;
    int n_controls = 0, n_train = 0;
    for (int i = 0; i < 60; ++i) {
      if (cf.preds.fold_of[static_cast<std::size_t>(i)] == fold) continue;  // training part
      ++n_train;
      treated_share += ds.d[i];
      if (ds.d[i] == 0) {
        control_mean += ds.y1[i] - ds.y0[i];
        ++n_controls;
      }
    }
    control_mean /= n_controls;
    treated_share /= n_train;
    for (int i = 0; i < 60; ++i) {
      if (cf.preds.fold_of[static_cast<std::size_t>(i)] != fold) continue;
      REQUIRE(cf.preds.mu_x[i] == Catch::Approx(control_mean).margin(1e-12));
      REQUIRE(cf.preds.p_x[i] == Catch::Approx(treated_share).margin(1e-12));
    }
  }
}

TEST_CASE("an uninformative appended Y0 column changes nothing") {
  PanelDataset ds = random_panel(80, 3, 24);
  ds.y0.setZero();
  ds.y1 = ds.X.col(0) + ds.y1;  // any outcome works; Y0 stays zero
  DmlConfig cfg;
  cfg.folds = 2;
  cfg.seed = 31;
  const auto cf = trendtest::crossfit(ds, cfg, Target::theta);
  REQUIRE(cf.preds.mu_y0x == cf.preds.mu_x);
  REQUIRE(cf.preds.p_y0x == cf.preds.p_x);
  const auto sv = trendtest::theta_scores(ds, cf.preds, cfg.trim);
  REQUIRE(sv.psi.mean() == 0.0);
  const auto result = trendtest::test_common_trends(ds, cfg);
  REQUIRE(result.theta_hat == 0.0);
}

TEST_CASE("results are deterministic across runs and thread counts") {
  const PanelDataset ds = random_panel(150, 4, 25);
  DmlConfig cfg;
  cfg.folds = 3;
  cfg.seed = 77;
  cfg.threads = 1;
  const auto r1 = trendtest::test_common_trends(ds, cfg);
  cfg.threads = 4;
  const auto r2 = trendtest::test_common_trends(ds, cfg);
  REQUIRE(r1.theta_hat == r2.theta_hat);
  REQUIRE(r1.se == r2.se);
  REQUIRE(r1.t_stat == r2.t_stat);
  REQUIRE(r1.p_value == r2.p_value);
  REQUIRE(r1.n_used == r2.n_used);

  const auto cf1 = trendtest::crossfit(ds, cfg, Target::theta);
  cfg.threads = 1;
  const auto cf2 = trendtest::crossfit(ds, cfg, Target::theta);
  REQUIRE(cf1.preds.mu_y0x == cf2.preds.mu_y0x);
  REQUIRE(cf1.preds.mu_x == cf2.preds.mu_x);
  REQUIRE(cf1.preds.p_y0x == cf2.preds.p_y0x);
  REQUIRE(cf1.preds.p_x == cf2.preds.p_x);

  const auto a1 = trendtest::estimate_atet(ds, cfg);
  const auto a2 = trendtest::estimate_atet(ds, cfg);
  REQUIRE(a1.atet_hat == a2.atet_hat);
  REQUIRE(a1.se == a2.se);
}

TEST_CASE("test results expose the documented invariants") {
  const PanelDataset ds = random_panel(150, 2, 26);
  DmlConfig cfg;
  cfg.folds = 2;
  cfg.seed = 3;
  const auto r = trendtest::test_common_trends(ds, cfg);
  REQUIRE(r.se > 0.0);
  REQUIRE(r.p_value >= 0.0);
  REQUIRE(r.p_value <= 1.0);
  REQUIRE(r.p_value == trendtest::normal_two_sided_p(r.t_stat));
  REQUIRE(r.t_stat == Catch::Approx(r.theta_hat / r.se).margin(1e-14));
  REQUIRE(r.n_used + r.n_trimmed == 150);
  REQUIRE(r.folds == 2);
  REQUIRE(r.seed == 3);
}

TEST_CASE("p-values are roughly uniform when the null holds") {
  // The outcome change is pure noise, so the tested hypothesis holds, while
  // treatment still selects on Y0 (the setting the test is built for).
  // Without any selection the penalty CV picks the null model in both folds
  // for a sizeable share of draws, which collapses theta to exactly zero and
  // puts an atom at p = 1; with selection the scores stay continuous.
  const int reps = 200;
  std::vector<double> pvals;
  for (int rep = 0; rep < reps; ++rep) {
    trendtest::Rng rng(trendtest::derive_seed(4242, {static_cast<std::uint64_t>(rep)}));
    const int n = 400;
    PanelDataset ds;
    ds.y0.resize(n);
    ds.y1.resize(n);
    ds.d.resize(n);
    ds.X.resize(n, 0);
    for (int i = 0; i < n; ++i) {
      ds.y0[i] = rng.normal();
      ds.d[i] = (ds.y0[i] + rng.normal() > 0.3) ? 1 : 0;
      ds.y1[i] = ds.y0[i] + rng.normal();
    }
    ds.d[0] = 1;
    ds.d[1] = 0;
    DmlConfig cfg;
    cfg.folds = 2;
    cfg.seed = trendtest::derive_seed(999, {static_cast<std::uint64_t>(rep)});
    pvals.push_back(trendtest::test_common_trends(ds, cfg).p_value);
  }
  std::sort(pvals.begin(), pvals.end());
  double ks = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double empirical_hi = static_cast<double>(i + 1) / reps;
    const double empirical_lo = static_cast<double>(i) / reps;
    ks = std::max(ks, std::fabs(empirical_hi - pvals[static_cast<std::size_t>(i)]));
    ks = std::max(ks, std::fabs(pvals[static_cast<std::size_t>(i)] - empirical_lo));
  }
  REQUIRE(ks < 0.1);
}

TEST_CASE("prediction validation catches shape and range issues") {
  const ToyCase t = toy_case();
  Predictions bad = t.preds;
  bad.p_x[0] = 1.5;
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, bad, 0.99), trendtest::ValidationError);
  bad = t.preds;
  bad.mu_x.resize(5);
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, bad, 0.99), trendtest::ValidationError);
  REQUIRE_THROWS_AS(trendtest::theta_scores(t.ds, t.preds, 0.0), trendtest::ValidationError);
}
