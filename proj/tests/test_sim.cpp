#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trendtest/sim.hpp"

using trendtest::SimulationConfig;

TEST_CASE("covariates carry the Toeplitz covariance") {
  SimulationConfig cfg;
  cfg.n = 100000;
  cfg.p = 5;
  cfg.seed = 404;
  const auto ds = trendtest::generate(cfg, 0);
  REQUIRE(ds.n() == 100000);
  REQUIRE(ds.p() == 5);
  Eigen::MatrixXd centered = ds.X.rowwise() - ds.X.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(cfg.n);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      REQUIRE(cov(i, j) == Catch::Approx(std::pow(0.5, std::abs(i - j))).margin(0.02));
    }
  }
}

TEST_CASE("treated share is close to one half") {
  SimulationConfig cfg;
  cfg.n = 100000;
  cfg.p = 10;
  cfg.seed = 405;
  const auto ds = trendtest::generate(cfg, 3);
  double share = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) share += ds.d[i];
  share /= static_cast<double>(ds.n());
  REQUIRE(share == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("pre-period outcome variance tracks beta_v0") {
  SimulationConfig cfg;
  cfg.n = 100000;
  cfg.p = 2;
  cfg.seed = 406;
  const auto base = trendtest::generate(cfg, 0);
  const double var0 = (base.y0.array() - base.y0.mean()).square().mean();
  REQUIRE(var0 == Catch::Approx(1.0).margin(0.05));  // Y0 = U

  cfg.beta_v0 = 0.5;
  const auto shifted = trendtest::generate(cfg, 0);
  const double var1 = (shifted.y0.array() - shifted.y0.mean()).square().mean();
  REQUIRE(var1 == Catch::Approx(1.25).margin(0.05));  // U + 0.5 V0
}

TEST_CASE("under the plain null the outcome change equals 1 + D + X'b + V1") {
  SimulationConfig cfg;
  cfg.n = 50000;
  cfg.p = 3;
  cfg.seed = 407;
  const auto ds = trendtest::generate(cfg, 1);
  // E[dY - D - X'b] = 1 and Var = Var(V1) = 1
  Eigen::VectorXd bx(3);
  bx << 0.7, 0.35, 0.7 / 3.0;
  Eigen::VectorXd residual = ds.y1 - ds.y0 - ds.X * bx;
  for (Eigen::Index i = 0; i < ds.n(); ++i) residual[i] -= ds.d[i];
  REQUIRE(residual.mean() == Catch::Approx(1.0).margin(0.02));
  REQUIRE((residual.array() - residual.mean()).square().mean() == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("replication draws are reproducible and distinct") {
  SimulationConfig cfg;
  cfg.n = 50;
  cfg.p = 3;
  cfg.seed = 408;
  const auto a = trendtest::generate(cfg, 5);
  const auto b = trendtest::generate(cfg, 5);
  REQUIRE(a.X == b.X);
  REQUIRE(a.y0 == b.y0);
  REQUIRE(a.y1 == b.y1);
  REQUIRE(a.d == b.d);
  const auto c = trendtest::generate(cfg, 6);
  REQUIRE(a.X != c.X);
}

TEST_CASE("config validation") {
  SimulationConfig cfg;
  cfg.p = 0;
  REQUIRE_THROWS_AS(trendtest::generate(cfg, 0), trendtest::ValidationError);
  cfg.p = 1;
  cfg.n = 7;
  REQUIRE_THROWS_AS(trendtest::generate(cfg, 0), trendtest::ValidationError);
  cfg.n = 100;
  cfg.trim = 0.0;
  REQUIRE_THROWS_AS(trendtest::generate(cfg, 0), trendtest::ValidationError);
  cfg.trim = 0.99;
  cfg.reps = 0;
  REQUIRE_THROWS_AS(trendtest::run_monte_carlo(cfg), trendtest::ValidationError);
}

TEST_CASE("a single replication reports zero spread") {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.p = 2;
  cfg.reps = 1;
  cfg.seed = 409;
  const auto result = trendtest::run_monte_carlo(cfg);
  REQUIRE(result.summary.reps_completed == 1);
  REQUIRE(result.summary.std == 0.0);
  REQUIRE(result.summary.mean_est == result.records[0].theta_hat);
  REQUIRE(result.summary.rmse >= std::fabs(result.summary.bias));
}

TEST_CASE("monte carlo summaries are schedule-independent") {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.p = 2;
  cfg.reps = 6;
  cfg.seed = 410;
  const auto serial = trendtest::run_monte_carlo(cfg, 1);
  const auto threaded = trendtest::run_monte_carlo(cfg, 3);
  REQUIRE(serial.summary.mean_est == threaded.summary.mean_est);
  REQUIRE(serial.summary.std == threaded.summary.std);
  REQUIRE(serial.summary.mean_se == threaded.summary.mean_se);
  REQUIRE(serial.summary.mean_pval == threaded.summary.mean_pval);
  REQUIRE(serial.summary.rejection_rate == threaded.summary.rejection_rate);
  REQUIRE(serial.summary.bias == threaded.summary.bias);
  REQUIRE(serial.summary.rmse == threaded.summary.rmse);
  for (int r = 0; r < 6; ++r) {
    REQUIRE(serial.records[static_cast<std::size_t>(r)].theta_hat ==
            threaded.records[static_cast<std::size_t>(r)].theta_hat);
    REQUIRE(serial.records[static_cast<std::size_t>(r)].atet_hat ==
            threaded.records[static_cast<std::size_t>(r)].atet_hat);
  }
}

TEST_CASE("summary invariants hold on a small run") {
  SimulationConfig cfg;
  cfg.n = 240;
  cfg.p = 3;
  cfg.reps = 5;
  cfg.seed = 411;
  const auto result = trendtest::run_monte_carlo(cfg);
  REQUIRE(result.summary.reps_completed == 5);
  REQUIRE(result.summary.rejection_rate >= 0.0);
  REQUIRE(result.summary.rejection_rate <= 1.0);
  REQUIRE(result.summary.rmse >= std::fabs(result.summary.bias));
  for (const auto& rec : result.records) {
    REQUIRE(rec.ok);
    REQUIRE(rec.theta_se > 0.0);
    REQUIRE(rec.pval >= 0.0);
    REQUIRE(rec.pval <= 1.0);
  }
}
