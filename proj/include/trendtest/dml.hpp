#pragma once

// Cross-fitted doubly robust estimation of the common-trend test statistic
// theta and of the DiD ATET.
//
// theta contrasts two matched-control means: the outcome-trend prediction
// given (Y0, X) averaged over treated units plus a propensity-weighted
// control residual term, minus the same construction given X alone. Under
// common trends (across matched groups and conditional on covariates) the
// two coincide and theta = 0.
//
// Nuisances are lasso fits with cross-validated penalties, trained on the
// complement of each fold and evaluated out-of-fold. Inverse-probability
// weights use the odds p/(1-p) of out-of-fold propensity predictions and are
// normalized to sum to one over retained control units; units whose
// propensity exceeds the trim threshold are dropped.

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trendtest/design.hpp"
#include "trendtest/dist.hpp"
#include "trendtest/errors.hpp"
#include "trendtest/lasso.hpp"
#include "trendtest/panel.hpp"
#include "trendtest/parallel.hpp"
#include "trendtest/rng.hpp"

namespace trendtest {

struct DmlConfig {
  int folds = 2;
  double trim = 0.99;
  std::uint64_t seed = 1;
  int threads = 1;
  int cv_folds = 10;
  int grid_size = 100;
  DesignSpec design;  // applied to the covariates before fitting
  LassoOptions lasso;
};

enum class Target { theta, atet };

// The four nuisance fits for one cross-fitting fold. The (Y0, X) fits are
// absent when only the ATET is estimated.
struct NuisanceSet {
  std::optional<LassoFit> mu_y0x;  // E[Y1-Y0 | Y0, X, D=0]
  std::optional<LassoFit> p_y0x;   // Pr(D=1 | Y0, X)
  LassoFit mu_x;                   // E[Y1-Y0 | X, D=0]
  LassoFit p_x;                    // Pr(D=1 | X)
  int fold_id = 0;
};

// Out-of-fold predictions, one entry per unit of the input panel.
struct Predictions {
  Eigen::VectorXd mu_y0x;
  Eigen::VectorXd mu_x;
  Eigen::VectorXd p_y0x;
  Eigen::VectorXd p_x;
  std::vector<int> fold_of;
};

struct CrossfitResult {
  std::vector<NuisanceSet> nuisances;
  Predictions preds;
};

struct ScoreVector {
  Eigen::VectorXd psi;        // one entry per retained unit; mean(psi) = estimate
  std::vector<int> retained;  // unit indices kept after trimming
  int n_trimmed = 0;
  double pr_d1 = 0.0;  // full-sample treated share
};

struct TestResult {
  double theta_hat = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int n_used = 0;
  int n_trimmed = 0;
  int folds = 0;
  std::uint64_t seed = 0;
};

struct AtetResult {
  double atet_hat = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int n_used = 0;
  int n_trimmed = 0;
  int folds = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Substream tags for seed derivation. The (Y0,X) and (X) variants of a
// nuisance share one CV seed: with an uninformative Y0 column the two fits
// are then bit-identical, which the score construction turns into an exact
// theta of zero.
constexpr std::uint64_t kFoldSplitTag = 101;
constexpr std::uint64_t kCvTag = 102;
constexpr std::uint64_t kNuisMu = 0;
constexpr std::uint64_t kNuisP = 1;

// CV-selected penalty, then a fit at that penalty. Tiny training sets fall
// back to the null model; an empty design needs no penalty at all.
inline LassoFit fit_nuisance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             Family family, const DmlConfig& cfg, std::uint64_t cv_seed) {
  const Eigen::Index n = y.size();
  const Eigen::Index q = X.cols();
  double lambda = 0.0;
  if (q > 0) {
    const int k = std::min<int>(cfg.cv_folds, static_cast<int>(n / 2));
    if (k >= 2) {
      lambda = cv_select_lambda(X, y, family, k, cfg.grid_size, cv_seed, cfg.lasso).lambda;
    } else {
      const detail::Standardized s = detail::standardize(X);
      lambda = detail::lambda_max_standardized(s.Z, y);
    }
  }
  return fit_lasso(X, y, family, lambda, cfg.lasso);
}

struct ScoreSummary {
  double est = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

inline ScoreSummary summarize_scores(const Eigen::VectorXd& psi) {
  ScoreSummary s;
  const Eigen::Index n = psi.size();
  s.est = psi.mean();
  const double var = (psi.array() - s.est).square().sum() / static_cast<double>(n - 1);
  s.se = std::sqrt(var / static_cast<double>(n));
  if (s.se > 0.0) {
    s.t_stat = s.est / s.se;
  } else {
    s.t_stat = s.est == 0.0 ? 0.0
                            : std::copysign(std::numeric_limits<double>::infinity(), s.est);
  }
  s.p_value = normal_two_sided_p(s.t_stat);
  return s;
}

inline void check_prediction_vector(const Eigen::VectorXd& v, Eigen::Index n,
                                    const char* name, bool is_probability) {
  if (v.size() != n) {
    throw ValidationError(std::string("predictions for ") + name + " must cover every unit");
  }
  if (!v.allFinite()) throw ValidationError(std::string("non-finite prediction in ") + name);
  if (is_probability && ((v.array() < 0.0).any() || (v.array() > 1.0).any())) {
    throw ValidationError(std::string(name) + " predictions must lie in [0, 1]");
  }
}

}  // namespace detail

inline CrossfitResult crossfit(const PanelDataset& ds, const DmlConfig& cfg,
                               Target target = Target::theta) {
  validate(ds);
  const int n = static_cast<int>(ds.n());
  if (cfg.folds < 2) throw ValidationError("crossfit: need at least 2 folds");
  if (cfg.folds > n) throw ValidationError("crossfit: more folds than units");

  const bool need_y0 = target == Target::theta;
  const Eigen::VectorXd dy = ds.outcome_change();

  // (Y0, X) designs carry the pre-treatment outcome as a final extra column
  Eigen::MatrixXd X_y0;
  if (need_y0) {
    X_y0.resize(ds.n(), ds.p() + 1);
    if (ds.p() > 0) X_y0.leftCols(ds.p()) = ds.X;
    X_y0.col(ds.p()) = ds.y0;
  }

  CrossfitResult result;
  result.preds.fold_of = fold_assignment(n, cfg.folds, derive_seed(cfg.seed, {detail::kFoldSplitTag}));
  result.preds.mu_x.resize(n);
  result.preds.p_x.resize(n);
  if (need_y0) {
    result.preds.mu_y0x.resize(n);
    result.preds.p_y0x.resize(n);
  }
  result.nuisances.resize(static_cast<std::size_t>(cfg.folds));

  const std::vector<int>& fold_of = result.preds.fold_of;
  parallel_for(cfg.folds, cfg.threads, [&](int fold) {
    std::vector<int> train_rows, eval_rows, train_controls;
    int train_treated = 0;
    for (int i = 0; i < n; ++i) {
      if (fold_of[static_cast<std::size_t>(i)] == fold) {
        eval_rows.push_back(i);
      } else {
        train_rows.push_back(i);
        if (ds.d[i] == 0) {
          train_controls.push_back(i);
        } else {
          ++train_treated;
        }
      }
    }
    if (train_treated == 0 || train_controls.empty()) {
      throw FoldError("training part of fold " + std::to_string(fold) +
                      " lacks a treatment class; use fewer folds");
    }
    if (train_controls.size() < 2) {
      throw FoldError("training part of fold " + std::to_string(fold) +
                      " has fewer than 2 control units; use fewer folds");
    }

    auto gather = [](const Eigen::MatrixXd& M, const std::vector<int>& rows) {
      Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
      return out;
    };
    auto gather_vec = [](const Eigen::VectorXd& v, const std::vector<int>& rows) {
      Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
      return out;
    };

    Eigen::VectorXd d_train(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      d_train[static_cast<Eigen::Index>(i)] = static_cast<double>(ds.d[train_rows[i]]);
    }
    const Eigen::VectorXd dy_controls = gather_vec(dy, train_controls);

    NuisanceSet& ns = result.nuisances[static_cast<std::size_t>(fold)];
    ns.fold_id = fold;

    const std::uint64_t f = static_cast<std::uint64_t>(fold);
    const std::uint64_t mu_seed = derive_seed(cfg.seed, {detail::kCvTag, f, detail::kNuisMu});
    const std::uint64_t p_seed = derive_seed(cfg.seed, {detail::kCvTag, f, detail::kNuisP});
    ns.mu_x = detail::fit_nuisance(gather(ds.X, train_controls), dy_controls, Family::linear,
                                   cfg, mu_seed);
    ns.p_x = detail::fit_nuisance(gather(ds.X, train_rows), d_train, Family::logistic, cfg,
                                  p_seed);
    if (need_y0) {
      ns.mu_y0x = detail::fit_nuisance(gather(X_y0, train_controls), dy_controls,
                                       Family::linear, cfg, mu_seed);
      ns.p_y0x = detail::fit_nuisance(gather(X_y0, train_rows), d_train, Family::logistic,
                                      cfg, p_seed);
    }

    const Eigen::MatrixXd X_eval = gather(ds.X, eval_rows);
    const Eigen::VectorXd mu_x_hat = predict_rows(ns.mu_x, X_eval);
    const Eigen::VectorXd p_x_hat = predict_rows(ns.p_x, X_eval);
    Eigen::VectorXd mu_y0x_hat, p_y0x_hat;
    if (need_y0) {
      const Eigen::MatrixXd Xy_eval = gather(X_y0, eval_rows);
      mu_y0x_hat = predict_rows(*ns.mu_y0x, Xy_eval);
      p_y0x_hat = predict_rows(*ns.p_y0x, Xy_eval);
    }
    for (std::size_t i = 0; i < eval_rows.size(); ++i) {
      const int unit = eval_rows[i];
      result.preds.mu_x[unit] = mu_x_hat[static_cast<Eigen::Index>(i)];
      result.preds.p_x[unit] = p_x_hat[static_cast<Eigen::Index>(i)];
      if (need_y0) {
        result.preds.mu_y0x[unit] = mu_y0x_hat[static_cast<Eigen::Index>(i)];
        result.preds.p_y0x[unit] = p_y0x_hat[static_cast<Eigen::Index>(i)];
      }
    }
  });

  return result;
}

// Doubly robust scores for the common-trend statistic. Units with either
// propensity prediction above `trim` are dropped; both DR terms use odds
// weights normalized over the retained controls. psi is scaled so that
// mean(psi) equals the estimate.
inline ScoreVector theta_scores(const PanelDataset& ds, const Predictions& preds,
                                double trim) {
  validate(ds);
  const Eigen::Index n = ds.n();
  if (!(trim > 0.0 && trim <= 1.0)) throw ValidationError("trim must lie in (0, 1]");
  detail::check_prediction_vector(preds.mu_y0x, n, "mu(Y0,X)", false);
  detail::check_prediction_vector(preds.mu_x, n, "mu(X)", false);
  detail::check_prediction_vector(preds.p_y0x, n, "p(Y0,X)", true);
  detail::check_prediction_vector(preds.p_x, n, "p(X)", true);

  ScoreVector sv;
  int n_treated_full = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    n_treated_full += (ds.d[i] == 1);
    if (preds.p_y0x[i] > trim || preds.p_x[i] > trim) continue;
    sv.retained.push_back(static_cast<int>(i));
  }
  sv.n_trimmed = static_cast<int>(n) - static_cast<int>(sv.retained.size());
  sv.pr_d1 = static_cast<double>(n_treated_full) / static_cast<double>(n);
  if (sv.retained.empty()) throw ValidationError("all units were trimmed");

  int n1 = 0, n0 = 0;
  for (int unit : sv.retained) (ds.d[unit] == 1 ? n1 : n0)++;
  if (n1 == 0) throw ValidationError("no treated units retained after trimming");
  if (n0 == 0) throw ValidationError("no control units retained after trimming");

  const Eigen::VectorXd dy = ds.outcome_change();
  double odds1_sum = 0.0, odds0_sum = 0.0;
  for (int unit : sv.retained) {
    if (ds.d[unit] == 1) continue;
    if (1.0 - preds.p_y0x[unit] < 1e-12 || 1.0 - preds.p_x[unit] < 1e-12) {
      throw NumericError("propensity prediction too close to 1 for unit " +
                         std::to_string(unit + 1) + "; tighten the trim threshold");
    }
    odds1_sum += preds.p_y0x[unit] / (1.0 - preds.p_y0x[unit]);
    odds0_sum += preds.p_x[unit] / (1.0 - preds.p_x[unit]);
  }

  const double n_r = static_cast<double>(sv.retained.size());
  sv.psi.resize(static_cast<Eigen::Index>(sv.retained.size()));
  double weight1_total = 0.0, weight0_total = 0.0;
  for (std::size_t k = 0; k < sv.retained.size(); ++k) {
    const int unit = sv.retained[k];
    double psi;
    if (ds.d[unit] == 1) {
      psi = (n_r / static_cast<double>(n1)) * (preds.mu_y0x[unit] - preds.mu_x[unit]);
    } else {
      const double w1 = (preds.p_y0x[unit] / (1.0 - preds.p_y0x[unit])) / odds1_sum;
      const double w0 = (preds.p_x[unit] / (1.0 - preds.p_x[unit])) / odds0_sum;
      weight1_total += w1;
      weight0_total += w0;
      psi = n_r * (w1 * (dy[unit] - preds.mu_y0x[unit]) - w0 * (dy[unit] - preds.mu_x[unit]));
    }
    sv.psi[static_cast<Eigen::Index>(k)] = psi;
  }
  assert(std::fabs(weight1_total - 1.0) <= 1e-12);
  assert(std::fabs(weight0_total - 1.0) <= 1e-12);
  (void)weight1_total;
  (void)weight0_total;
  return sv;
}

// DR DiD scores for the ATET with outcome Y1-Y0; trimming looks at p(X) only.
inline ScoreVector atet_scores(const PanelDataset& ds, const Predictions& preds,
                               double trim) {
  validate(ds);
  const Eigen::Index n = ds.n();
  if (!(trim > 0.0 && trim <= 1.0)) throw ValidationError("trim must lie in (0, 1]");
  detail::check_prediction_vector(preds.mu_x, n, "mu(X)", false);
  detail::check_prediction_vector(preds.p_x, n, "p(X)", true);

  ScoreVector sv;
  int n_treated_full = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    n_treated_full += (ds.d[i] == 1);
    if (preds.p_x[i] > trim) continue;
    sv.retained.push_back(static_cast<int>(i));
  }
  sv.n_trimmed = static_cast<int>(n) - static_cast<int>(sv.retained.size());
  sv.pr_d1 = static_cast<double>(n_treated_full) / static_cast<double>(n);
  if (sv.retained.empty()) throw ValidationError("all units were trimmed");

  int n1 = 0, n0 = 0;
  for (int unit : sv.retained) (ds.d[unit] == 1 ? n1 : n0)++;
  if (n1 == 0) throw ValidationError("no treated units retained after trimming");
  if (n0 == 0) throw ValidationError("no control units retained after trimming");

  const Eigen::VectorXd dy = ds.outcome_change();
  double odds_sum = 0.0;
  for (int unit : sv.retained) {
    if (ds.d[unit] == 1) continue;
    if (1.0 - preds.p_x[unit] < 1e-12) {
      throw NumericError("propensity prediction too close to 1 for unit " +
                         std::to_string(unit + 1) + "; tighten the trim threshold");
    }
    odds_sum += preds.p_x[unit] / (1.0 - preds.p_x[unit]);
  }

  const double n_r = static_cast<double>(sv.retained.size());
  sv.psi.resize(static_cast<Eigen::Index>(sv.retained.size()));
  double weight_total = 0.0;
  for (std::size_t k = 0; k < sv.retained.size(); ++k) {
    const int unit = sv.retained[k];
    double psi;
    if (ds.d[unit] == 1) {
      psi = (n_r / static_cast<double>(n1)) * (dy[unit] - preds.mu_x[unit]);
    } else {
      const double w = (preds.p_x[unit] / (1.0 - preds.p_x[unit])) / odds_sum;
      weight_total += w;
      psi = -n_r * w * (dy[unit] - preds.mu_x[unit]);
    }
    sv.psi[static_cast<Eigen::Index>(k)] = psi;
  }
  assert(std::fabs(weight_total - 1.0) <= 1e-12);
  (void)weight_total;
  return sv;
}

inline TestResult test_common_trends(const PanelDataset& ds, const DmlConfig& cfg) {
  const PanelDataset expanded = expand_design(ds, cfg.design);
  const CrossfitResult cf = crossfit(expanded, cfg, Target::theta);
  const ScoreVector sv = theta_scores(expanded, cf.preds, cfg.trim);
  const detail::ScoreSummary s = detail::summarize_scores(sv.psi);
  TestResult r;
  r.theta_hat = s.est;
  r.se = s.se;
  r.t_stat = s.t_stat;
  r.p_value = s.p_value;
  r.n_used = static_cast<int>(sv.retained.size());
  r.n_trimmed = sv.n_trimmed;
  r.folds = cfg.folds;
  r.seed = cfg.seed;
  return r;
}

inline AtetResult estimate_atet(const PanelDataset& ds, const DmlConfig& cfg) {
  const PanelDataset expanded = expand_design(ds, cfg.design);
  const CrossfitResult cf = crossfit(expanded, cfg, Target::atet);
  const ScoreVector sv = atet_scores(expanded, cf.preds, cfg.trim);
  const detail::ScoreSummary s = detail::summarize_scores(sv.psi);
  AtetResult r;
  r.atet_hat = s.est;
  r.se = s.se;
  r.t_stat = s.t_stat;
  r.p_value = s.p_value;
  r.n_used = static_cast<int>(sv.retained.size());
  r.n_trimmed = sv.n_trimmed;
  r.folds = cfg.folds;
  r.seed = cfg.seed;
  return r;
}

}  // namespace trendtest
