#pragma once

// Monte Carlo harness around a two-period DGP with a fixed effect U, a
// time-varying treatment confounder Q, pre-period noise V0, and covariates X
// drawn from a Toeplitz-covariance normal:
//
//   Y0 = U + beta_v0 * V0
//   D  = 1{ X'bx + U + Q > 0 },           bx_i = 0.7 / i
//   Y1 = 1 + D + X'bx + (1 + beta_u) U - beta_q Q + V1
//   Cov(X_i, X_j) = 0.5^{|i-j|},          U, Q, V0, V1 ~ N(0,1) independent
//
// The treatment effect is 1 by construction. beta_u and beta_q break the
// conditional common trend assumption; beta_v0 keeps it intact while
// breaking the pre-treatment-outcome implication the test targets.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trendtest/dml.hpp"
#include "trendtest/errors.hpp"
#include "trendtest/panel.hpp"
#include "trendtest/parallel.hpp"
#include "trendtest/rng.hpp"

namespace trendtest {

struct SimulationConfig {
  int n = 1000;
  int p = 200;
  double beta_u = 0.0;
  double beta_q = 0.0;
  double beta_v0 = 0.0;
  int reps = 1000;
  std::uint64_t seed = 1;
  int folds = 2;
  double trim = 0.99;
  double true_effect = 1.0;  // the DGP's treatment coefficient
  double alpha = 0.05;
  int cv_folds = 10;
  int grid_size = 100;
};

struct SimulationSummary {
  double mean_est = 0.0;
  double std = 0.0;
  double mean_se = 0.0;
  double mean_pval = 0.0;
  double rejection_rate = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  int reps_completed = 0;
};

struct RepRecord {
  int rep = 0;
  bool ok = false;
  std::string error;
  double theta_hat = 0.0;
  double theta_se = 0.0;
  double pval = 1.0;
  double atet_hat = 0.0;
  double atet_se = 0.0;
  int n_trimmed = 0;
};

struct MonteCarloResult {
  SimulationSummary summary;
  std::vector<RepRecord> records;
};

namespace detail {

constexpr std::uint64_t kDataTag = 201;
constexpr std::uint64_t kAnalysisTag = 202;

inline void validate_config(const SimulationConfig& cfg) {
  if (cfg.p < 1) throw ValidationError("simulation: p must be at least 1");
  if (cfg.folds < 2) throw ValidationError("simulation: folds must be at least 2");
  if (cfg.n < 4 * cfg.folds) throw ValidationError("simulation: need n >= 4*folds");
  if (cfg.reps < 1) throw ValidationError("simulation: reps must be at least 1");
  if (!(cfg.trim > 0.0 && cfg.trim <= 1.0)) throw ValidationError("simulation: trim must lie in (0, 1]");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ValidationError("simulation: alpha must lie in (0, 1)");
}

}  // namespace detail

// Holds the one-time Cholesky factor of the covariate covariance.
class Dgp {
public:
  explicit Dgp(const SimulationConfig& cfg) : cfg_(cfg) {
    detail::validate_config(cfg);
    Eigen::MatrixXd sigma(cfg.p, cfg.p);
    for (int i = 0; i < cfg.p; ++i) {
      for (int j = 0; j < cfg.p; ++j) sigma(i, j) = std::pow(0.5, std::abs(i - j));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericError("covariate covariance factorization failed");
    }
    chol_ = llt.matrixL();
    beta_x_.resize(cfg.p);
    for (int i = 0; i < cfg.p; ++i) beta_x_[i] = 0.7 / static_cast<double>(i + 1);
  }

  // Per-unit draw order: the p covariate normals, then U, Q, V0, V1; the
  // replication stream is derived from (seed, rep_index).
  PanelDataset generate(int rep_index) const {
    Rng rng(derive_seed(cfg_.seed, {detail::kDataTag, static_cast<std::uint64_t>(rep_index)}));
    PanelDataset ds;
    ds.y0.resize(cfg_.n);
    ds.y1.resize(cfg_.n);
    ds.d.resize(cfg_.n);
    ds.X.resize(cfg_.n, cfg_.p);
    ds.covariate_names.resize(static_cast<std::size_t>(cfg_.p));
    for (int j = 0; j < cfg_.p; ++j) ds.covariate_names[static_cast<std::size_t>(j)] = "x" + std::to_string(j + 1);

    Eigen::VectorXd z(cfg_.p);
    for (int i = 0; i < cfg_.n; ++i) {
      for (int j = 0; j < cfg_.p; ++j) z[j] = rng.normal();
      const double u = rng.normal();
      const double q = rng.normal();
      const double v0 = rng.normal();
      const double v1 = rng.normal();
      ds.X.row(i) = (chol_ * z).transpose();
      const double xb = ds.X.row(i).dot(beta_x_);
      ds.y0[i] = u + cfg_.beta_v0 * v0;
      const int d = (xb + u + q > 0.0) ? 1 : 0;
      ds.d[i] = d;
      ds.y1[i] = 1.0 + d + xb + (1.0 + cfg_.beta_u) * u - cfg_.beta_q * q + v1;
    }
    return ds;
  }

  const SimulationConfig& config() const { return cfg_; }

private:
  SimulationConfig cfg_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd beta_x_;
};

inline PanelDataset generate(const SimulationConfig& cfg, int rep_index) {
  return Dgp(cfg).generate(rep_index);
}

// Runs the test and the ATET estimator on `reps` fresh draws and summarizes
// the usual columns; bias and rmse refer to the ATET against true_effect.
// Replications are independent and may run on several threads; the summary
// is a fold over replication index order, so it does not depend on the
// schedule. Failed replications are excluded; more than 5% failures abort.
inline MonteCarloResult run_monte_carlo(const SimulationConfig& cfg, int threads = 1) {
  const Dgp dgp(cfg);
  MonteCarloResult out;
  out.records.resize(static_cast<std::size_t>(cfg.reps));

  parallel_for(cfg.reps, threads, [&](int rep) {
    RepRecord& rec = out.records[static_cast<std::size_t>(rep)];
    rec.rep = rep;
    try {
      const PanelDataset ds = dgp.generate(rep);
      DmlConfig dc;
      dc.folds = cfg.folds;
      dc.trim = cfg.trim;
      dc.seed = derive_seed(cfg.seed, {detail::kAnalysisTag, static_cast<std::uint64_t>(rep)});
      dc.cv_folds = cfg.cv_folds;
      dc.grid_size = cfg.grid_size;
      // one crossfit serves both: the theta target also fits mu(X) and p(X)
      const CrossfitResult cf = crossfit(ds, dc, Target::theta);
      const ScoreVector theta_sv = theta_scores(ds, cf.preds, dc.trim);
      const detail::ScoreSummary ts = detail::summarize_scores(theta_sv.psi);
      const ScoreVector atet_sv = atet_scores(ds, cf.preds, dc.trim);
      const detail::ScoreSummary as = detail::summarize_scores(atet_sv.psi);
      rec.theta_hat = ts.est;
      rec.theta_se = ts.se;
      rec.pval = ts.p_value;
      rec.atet_hat = as.est;
      rec.atet_se = as.se;
      rec.n_trimmed = theta_sv.n_trimmed;
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  });

  int completed = 0;
  for (const auto& rec : out.records) completed += rec.ok;
  const int failed = cfg.reps - completed;
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(cfg.reps)) {
    std::string first;
    for (const auto& rec : out.records) {
      if (!rec.ok) {
        first = rec.error;
        break;
      }
    }
    throw NumericError(std::to_string(failed) + " of " + std::to_string(cfg.reps) +
                       " replications failed (first error: " + first + ")");
  }
  if (completed == 0) throw NumericError("all replications failed");

  SimulationSummary& s = out.summary;
  s.reps_completed = completed;
  double sum_est = 0.0, sum_se = 0.0, sum_pval = 0.0, sum_rej = 0.0;
  double sum_atet = 0.0, sum_sq_err = 0.0;
  for (const auto& rec : out.records) {
    if (!rec.ok) continue;
    sum_est += rec.theta_hat;
    sum_se += rec.theta_se;
    sum_pval += rec.pval;
    sum_rej += (rec.pval <= cfg.alpha) ? 1.0 : 0.0;
    sum_atet += rec.atet_hat;
    const double err = rec.atet_hat - cfg.true_effect;
    sum_sq_err += err * err;
  }
  const double m = static_cast<double>(completed);
  s.mean_est = sum_est / m;
  s.mean_se = sum_se / m;
  s.mean_pval = sum_pval / m;
  s.rejection_rate = sum_rej / m;
  s.bias = sum_atet / m - cfg.true_effect;
  s.rmse = std::sqrt(sum_sq_err / m);
  if (completed > 1) {
    double ss = 0.0;
    for (const auto& rec : out.records) {
      if (!rec.ok) continue;
      ss += (rec.theta_hat - s.mean_est) * (rec.theta_hat - s.mean_est);
    }
    s.std = std::sqrt(ss / (m - 1.0));
  } else {
    s.std = 0.0;
  }
  return out;
}

}  // namespace trendtest
