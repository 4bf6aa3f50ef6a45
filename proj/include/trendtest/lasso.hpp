#pragma once

// Penalized regression used for every nuisance function: lasso linear and
// lasso logistic fits with a cross-validated penalty.
//
// Solver layout:
//   linear   - cyclic coordinate descent on the Gram matrix of the
//              standardized columns (objective (1/2n)||y - a - Xb||^2 + l|b|_1)
//   logistic - outer IRLS quadratic approximation, inner cyclic coordinate
//              descent on the weighted residuals ((1/n) NLL + l|b|_1)
// Columns are standardized to mean zero and unit (population) variance for
// fitting; reported coefficients are mapped back to the original scale. The
// intercept is never penalized. Zero-variance columns get coefficient 0.

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trendtest/errors.hpp"
#include "trendtest/rng.hpp"

namespace trendtest {

enum class Family { linear, logistic };

struct LassoOptions {
  double tol = 1e-7;      // max coefficient change per sweep, standardized scale
  int max_sweeps = 1000;  // linear sweep cap / logistic inner sweep cap
  int max_outer = 100;    // IRLS outer cap
  bool record_objective = false;
};

struct LassoFit {
  Family family = Family::linear;
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // original scale
  double lambda = 0.0;
  Eigen::VectorXd column_mean;
  Eigen::VectorXd column_scale;  // 1.0 for zero-variance columns
  int n_iterations = 0;          // sweeps (linear) or outer IRLS steps (logistic)
  bool converged = false;
  std::vector<double> objective_trace;  // filled when record_objective is set
};

namespace detail {

inline double soft_threshold(double u, double lambda) {
  if (u > lambda) return u - lambda;
  if (u < -lambda) return u + lambda;
  return 0.0;
}

struct Standardized {
  Eigen::MatrixXd Z;  // centered and scaled columns; zero columns stay zero
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

inline Standardized standardize(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), q = X.cols();
  Standardized s;
  s.mean.resize(q);
  s.scale.resize(q);
  s.Z.resize(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double m = X.col(j).mean();
    const double var = (X.col(j).array() - m).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    s.mean[j] = m;
    s.scale[j] = sd > 0.0 ? sd : 1.0;
    s.Z.col(j) = (X.col(j).array() - m) / s.scale[j];
  }
  return s;
}

// smallest penalty at which every slope is zero
inline double lambda_max_standardized(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
  if (Z.cols() == 0) return 0.0;
  const double ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ybar;
  const double inv_n = 1.0 / static_cast<double>(y.size());
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    lmax = std::max(lmax, std::fabs(Z.col(j).dot(yc) * inv_n));
  }
  return lmax;
}

// precomputed pieces of the linear objective on standardized columns
struct LinearWorkspace {
  Eigen::MatrixXd Q;   // (1/n) Z'Z
  Eigen::VectorXd c;   // (1/n) Z'(y - ybar)
  double ybar = 0.0;
  double sy2 = 0.0;    // (1/n) ||y - ybar||^2
};

// Entries are built from per-column dot products so that appending a column
// leaves the existing entries bit-identical (a blocked matrix product would
// regroup the sums).
inline LinearWorkspace make_linear_workspace(const Eigen::MatrixXd& Z,
                                             const Eigen::VectorXd& y) {
  LinearWorkspace ws;
  const Eigen::Index q = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(y.size());
  ws.ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ws.ybar;
  ws.Q.resize(q, q);
  ws.c.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    ws.c[j] = Z.col(j).dot(yc) * inv_n;
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = Z.col(i).dot(Z.col(j)) * inv_n;
      ws.Q(i, j) = v;
      ws.Q(j, i) = v;
    }
  }
  ws.sy2 = yc.squaredNorm() * inv_n;
  return ws;
}

inline double linear_objective(const LinearWorkspace& ws, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& g, double lambda) {
  return 0.5 * ws.sy2 - b.dot(ws.c) + 0.5 * b.dot(g) + lambda * b.lpNorm<1>();
}

// Cyclic coordinate descent at a single penalty; b is the warm start and the
// result. Returns sweeps used; sets converged.
inline int linear_cd(const LinearWorkspace& ws, double lambda, Eigen::VectorXd& b,
                     const LassoOptions& opts, bool& converged,
                     std::vector<double>* trace) {
  const Eigen::Index q = b.size();
  Eigen::VectorXd g = ws.Q * b;  // Q b, kept in sync with b
#ifndef NDEBUG
  double prev_obj = linear_objective(ws, b, g, lambda);
#endif
  if (trace) trace->push_back(linear_objective(ws, b, g, lambda));
  int sweep = 0;
  converged = false;
  for (; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      const double qjj = ws.Q(j, j);
      if (qjj <= 0.0) continue;  // zero-variance column
      const double old = b[j];
      const double u = ws.c[j] - g[j] + qjj * old;
      const double updated = soft_threshold(u, lambda) / qjj;
      if (updated != old) {
        g += ws.Q.col(j) * (updated - old);
        b[j] = updated;
        max_change = std::max(max_change, std::fabs(updated - old));
      }
    }
#ifndef NDEBUG
    // exact coordinate minimization keeps the objective non-increasing
    const double obj = linear_objective(ws, b, g, lambda);
    assert(obj <= prev_obj + 1e-10 * (1.0 + std::fabs(prev_obj)));
    prev_obj = obj;
#endif
    if (trace) trace->push_back(linear_objective(ws, b, g, lambda));
    if (max_change < opts.tol) {
      converged = true;
      ++sweep;
      break;
    }
  }
  return sweep;
}

inline double sigmoid(double eta) {
  if (eta >= 0.0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double log1pexp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double logistic_objective(const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& b, double lambda) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) nll += log1pexp(eta[i]) - y[i] * eta[i];
  return nll / static_cast<double>(y.size()) + lambda * b.lpNorm<1>();
}

// IRLS with inner coordinate descent; (a, b) are warm starts and results.
// The inner solver sweeps the full coordinate set once, then cycles over the
// active set until it settles, and accepts only when a final full sweep
// moves nothing. eta is recovered from the working residual instead of a
// fresh matrix-vector product.
inline int logistic_irls(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                         double lambda, double& a, Eigen::VectorXd& b,
                         const LassoOptions& opts, bool& converged,
                         std::vector<double>* trace) {
  const Eigen::Index n = Z.rows(), q = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  constexpr double kProbEps = 1e-5;

  Eigen::VectorXd eta = (Z * b).array() + a;
  Eigen::VectorXd w(n), r(n), work_response(n), wz2(q);
  if (trace) trace->push_back(logistic_objective(eta, y, b, lambda));
  converged = false;
  int outer = 0;
  for (; outer < opts.max_outer; ++outer) {
    // quadratic approximation at the current fit
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = sigmoid(eta[i]);
      double wi;
      if (p < kProbEps) {
        p = 0.0;
        wi = kProbEps;
      } else if (p > 1.0 - kProbEps) {
        p = 1.0;
        wi = kProbEps;
      } else {
        wi = p * (1.0 - p);
      }
      w[i] = wi;
      r[i] = (y[i] - p) / wi;  // working residual at (a, b)
      work_response[i] = eta[i] + r[i];
    }
    const double wsum = w.sum();
    for (Eigen::Index j = 0; j < q; ++j) {
      wz2[j] = (Z.col(j).array().square() * w.array()).sum() * inv_n;
    }

    auto update_coord = [&](Eigen::Index j, double& max_change) {
      if (wz2[j] <= 0.0) return;
      const double old = b[j];
      const double u = inv_n * (Z.col(j).array() * w.array() * r.array()).sum() + wz2[j] * old;
      const double updated = soft_threshold(u, lambda) / wz2[j];
      if (updated != old) {
        r -= Z.col(j) * (updated - old);
        b[j] = updated;
        max_change = std::max(max_change, std::fabs(updated - old));
      }
    };
    auto update_intercept = [&](double& max_change) {
      const double da = (w.array() * r.array()).sum() / wsum;
      if (da != 0.0) {
        a += da;
        r.array() -= da;
        max_change = std::max(max_change, std::fabs(da));
      }
    };

    double outer_change = 0.0;
    int sweeps_left = opts.max_sweeps;
    while (sweeps_left > 0) {
      // full sweep
      --sweeps_left;
      double full_change = 0.0;
      for (Eigen::Index j = 0; j < q; ++j) update_coord(j, full_change);
      update_intercept(full_change);
      outer_change = std::max(outer_change, full_change);
      if (full_change < opts.tol) break;

      // settle the active set before checking the full set again
      std::vector<Eigen::Index> active;
      active.reserve(static_cast<std::size_t>(q));
      for (Eigen::Index j = 0; j < q; ++j) {
        if (b[j] != 0.0) active.push_back(j);
      }
      while (sweeps_left > 0) {
        --sweeps_left;
        double active_change = 0.0;
        for (Eigen::Index j : active) update_coord(j, active_change);
        update_intercept(active_change);
        outer_change = std::max(outer_change, active_change);
        if (active_change < opts.tol) break;
      }
    }

    eta = work_response - r;  // equals a + Z b up to the residual updates
    if (trace) trace->push_back(logistic_objective(eta, y, b, lambda));
    if (outer_change < opts.tol) {
      converged = true;
      ++outer;
      break;
    }
  }
  return outer;
}

inline void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family) {
  if (y.size() < 2) throw ValidationError("fit_lasso: need at least 2 observations");
  if (X.rows() != y.size()) throw ValidationError("fit_lasso: X rows and y length differ");
  if ((X.size() > 0 && !X.allFinite()) || !y.allFinite()) {
    throw ValidationError("fit_lasso: non-finite input");
  }
  if (family == Family::logistic) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw ValidationError("fit_lasso: logistic response must be 0/1");
      }
    }
  }
}

inline double clamp_probability(double p) {
  return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace detail

inline std::vector<double> lambda_grid(double lambda_max, int grid_size) {
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  const double ratio = 0.001;
  for (int i = 0; i < grid_size; ++i) {
    grid[static_cast<std::size_t>(i)] =
        lambda_max * std::pow(ratio, static_cast<double>(i) / (grid_size - 1));
  }
  return grid;
}

inline LassoFit fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          Family family, double lambda,
                          const LassoOptions& opts = {}) {
  detail::check_inputs(X, y, family);
  if (lambda < 0.0) throw ValidationError("fit_lasso: lambda must be nonnegative");
  const Eigen::Index q = X.cols();

  LassoFit fit;
  fit.family = family;
  fit.lambda = lambda;

  detail::Standardized s = detail::standardize(X);
  fit.column_mean = s.mean;
  fit.column_scale = s.scale;

  Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
  double a_std = 0.0;
  std::vector<double>* trace = opts.record_objective ? &fit.objective_trace : nullptr;

  if (family == Family::linear) {
    const detail::LinearWorkspace ws = detail::make_linear_workspace(s.Z, y);
    fit.n_iterations = detail::linear_cd(ws, lambda, b, opts, fit.converged, trace);
    a_std = ws.ybar;  // columns are centered
  } else {
    const double ybar = y.mean();
    if (ybar <= 0.0 || ybar >= 1.0) {
      // single-class response: the unpenalized intercept diverges; return the
      // capped null model and flag non-convergence
      a_std = detail::logit(std::min(1.0 - 1e-8, std::max(1e-8, ybar)));
      fit.n_iterations = 0;
      fit.converged = false;
    } else {
      a_std = detail::logit(ybar);
      fit.n_iterations =
          detail::logistic_irls(s.Z, y, lambda, a_std, b, opts, fit.converged, trace);
    }
  }

  fit.coefficients = b.cwiseQuotient(s.scale);
  double shift = 0.0;  // plain loop: appended columns must not regroup the sum
  for (Eigen::Index j = 0; j < q; ++j) shift += fit.coefficients[j] * s.mean[j];
  fit.intercept = a_std - shift;
  return fit;
}

inline double predict(const LassoFit& fit, const Eigen::VectorXd& x) {
  if (x.size() != fit.coefficients.size()) {
    throw ValidationError("predict: expected " + std::to_string(fit.coefficients.size()) +
                          " features, got " + std::to_string(x.size()));
  }
  double eta = fit.intercept;
  for (Eigen::Index j = 0; j < x.size(); ++j) eta += fit.coefficients[j] * x[j];
  if (fit.family == Family::linear) return eta;
  return detail::clamp_probability(detail::sigmoid(eta));
}

inline Eigen::VectorXd predict_rows(const LassoFit& fit, const Eigen::MatrixXd& X) {
  if (X.cols() != fit.coefficients.size()) {
    throw ValidationError("predict: expected " + std::to_string(fit.coefficients.size()) +
                          " features, got " + std::to_string(X.cols()));
  }
  Eigen::VectorXd eta = (X * fit.coefficients).array() + fit.intercept;
  if (fit.family == Family::linear) return eta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    eta[i] = detail::clamp_probability(detail::sigmoid(eta[i]));
  }
  return eta;
}

struct CvSelection {
  double lambda = 0.0;
  double lambda_max = 0.0;
  std::vector<double> grid;       // descending
  std::vector<double> mean_loss;  // out-of-fold loss per grid point
  bool degenerate_response = false;
};

// K-fold cross-validation over a log-spaced grid from lambda_max down to
// 0.001*lambda_max; returns the loss-minimizing penalty, ties going to the
// larger value. Folds come from a seeded shuffle, so the result is
// deterministic in (inputs, seed) and independent of evaluation order.
inline CvSelection cv_select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    Family family, int k, int grid_size,
                                    std::uint64_t seed, const LassoOptions& opts = {}) {
  detail::check_inputs(X, y, family);
  const Eigen::Index n = y.size();
  const Eigen::Index q = X.cols();
  if (k < 2) throw ValidationError("cv_select_lambda: need at least 2 folds");
  if (n < 2 * k) throw ValidationError("cv_select_lambda: need n >= 2k observations");
  if (grid_size < 2) throw ValidationError("cv_select_lambda: grid_size must be >= 2");

  CvSelection sel;
  const detail::Standardized s_full = detail::standardize(X);
  sel.lambda_max = detail::lambda_max_standardized(s_full.Z, y);
  sel.lambda = sel.lambda_max;

  const double ybar = y.mean();
  const double y_var = (y.array() - ybar).square().sum() / static_cast<double>(n);
  if (q == 0 || y_var <= 1e-24 * (1.0 + ybar * ybar) || sel.lambda_max <= 0.0) {
    sel.degenerate_response = true;  // response is constant up to roundoff
    return sel;
  }

  sel.grid = lambda_grid(sel.lambda_max, grid_size);
  sel.mean_loss.assign(sel.grid.size(), 0.0);

  const std::vector<int> fold_of = fold_assignment(static_cast<int>(n), k, seed);
  for (int fold = 0; fold < k; ++fold) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < static_cast<int>(n); ++i) {
      (fold_of[static_cast<std::size_t>(i)] == fold ? test_rows : train_rows).push_back(i);
    }
    Eigen::MatrixXd Xtr(train_rows.size(), q), Xte(test_rows.size(), q);
    Eigen::VectorXd ytr(train_rows.size()), yte(test_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train_rows[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train_rows[i]];
    }
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      Xte.row(static_cast<Eigen::Index>(i)) = X.row(test_rows[i]);
      yte[static_cast<Eigen::Index>(i)] = y[test_rows[i]];
    }

    const detail::Standardized st = detail::standardize(Xtr);
    Eigen::MatrixXd Zte(test_rows.size(), q);
    for (Eigen::Index j = 0; j < q; ++j) {
      Zte.col(j) = (Xte.col(j).array() - st.mean[j]) / st.scale[j];
    }

    // warm-started path over the common grid
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    double a_std = 0.0;
    detail::LinearWorkspace ws;
    bool logistic_degenerate = false;
    if (family == Family::linear) {
      ws = detail::make_linear_workspace(st.Z, ytr);
      a_std = ws.ybar;
    } else {
      const double ybar = ytr.mean();
      logistic_degenerate = (ybar <= 0.0 || ybar >= 1.0);
      a_std = detail::logit(std::min(1.0 - 1e-8, std::max(1e-8, ybar)));
    }
    for (std::size_t g = 0; g < sel.grid.size(); ++g) {
      bool conv = false;
      if (family == Family::linear) {
        detail::linear_cd(ws, sel.grid[g], b, opts, conv, nullptr);
      } else if (!logistic_degenerate) {
        detail::logistic_irls(st.Z, ytr, sel.grid[g], a_std, b, opts, conv, nullptr);
      }
      const Eigen::VectorXd eta = (Zte * b).array() + a_std;
      double loss = 0.0;
      if (family == Family::linear) {
        loss = (yte - eta).squaredNorm();
      } else {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
          const double p = detail::clamp_probability(detail::sigmoid(eta[i]));
          loss += -(yte[i] * std::log(p) + (1.0 - yte[i]) * std::log1p(-p));
        }
      }
      sel.mean_loss[g] += loss;
    }
  }
  for (double& v : sel.mean_loss) v /= static_cast<double>(n);

  std::size_t best = 0;
  for (std::size_t g = 1; g < sel.mean_loss.size(); ++g) {
    if (sel.mean_loss[g] < sel.mean_loss[best]) best = g;  // strict: ties keep larger lambda
  }
  sel.lambda = sel.grid[best];
  return sel;
}

}  // namespace trendtest
