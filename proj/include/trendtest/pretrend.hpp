#pragma once

// Covariate-free pre-trend checks on the control sample: t-test of the
// outcome change on a binary pre-treatment outcome, and a one-way F-test on
// the level indicators of a discrete pre-treatment outcome. Treated units
// never enter.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trendtest/dist.hpp"
#include "trendtest/errors.hpp"
#include "trendtest/panel.hpp"

namespace trendtest {

struct RegressionTestResult {
  enum class Kind { t_test, f_test };
  Kind kind = Kind::t_test;
  double statistic = 0.0;
  int df1 = 0;  // t: residual df; F: numerator df
  int df2 = 0;  // F: denominator df
  double p_value = 1.0;
  Eigen::VectorXd coefficients;  // t: slope; F: level contrasts vs the base level
  bool robust = false;
};

namespace detail {

struct ControlSample {
  Eigen::VectorXd y0;
  Eigen::VectorXd dy;
};

inline ControlSample control_sample(const PanelDataset& ds) {
  validate(ds);
  std::vector<double> y0_vals, dy_vals;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (ds.d[i] == 0) {
      y0_vals.push_back(ds.y0[i]);
      dy_vals.push_back(ds.y1[i] - ds.y0[i]);
    }
  }
  ControlSample cs;
  cs.y0 = Eigen::Map<Eigen::VectorXd>(y0_vals.data(), static_cast<Eigen::Index>(y0_vals.size()));
  cs.dy = Eigen::Map<Eigen::VectorXd>(dy_vals.data(), static_cast<Eigen::Index>(dy_vals.size()));
  return cs;
}

inline std::vector<double> distinct_sorted(const Eigen::VectorXd& v) {
  std::vector<double> levels(v.data(), v.data() + v.size());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

}  // namespace detail

// OLS of Y1-Y0 on the binary Y0 plus a constant among controls; slope
// t-statistic with HC1 standard errors by default.
inline RegressionTestResult pretrend_ols(const PanelDataset& ds, bool robust = true) {
  const detail::ControlSample cs = detail::control_sample(ds);
  const Eigen::Index n = cs.y0.size();
  if (n < 3) throw ValidationError("pretrend_ols: need at least 3 control units");
  const std::vector<double> levels = detail::distinct_sorted(cs.y0);
  if (levels.size() < 2) {
    throw ValidationError("pretrend_ols: pre-treatment outcome is constant among controls");
  }
  if (levels.size() > 2) {
    throw ValidationError("pretrend_ols: pre-treatment outcome takes " +
                          std::to_string(levels.size()) +
                          " distinct values among controls; use pretrend_ftest");
  }

  // explicit 2x2 normal equations for [1, y0]
  const double sy0 = cs.y0.sum();
  const double sy0sq = cs.y0.squaredNorm();
  const double sdy = cs.dy.sum();
  const double sxy = cs.y0.dot(cs.dy);
  const double nn = static_cast<double>(n);
  const double det = nn * sy0sq - sy0 * sy0;
  if (det <= 0.0) throw ValidationError("pretrend_ols: design is singular");
  const double slope = (nn * sxy - sy0 * sdy) / det;
  const double intercept = (sy0sq * sdy - sy0 * sxy) / det;

  const Eigen::VectorXd resid = cs.dy.array() - intercept - slope * cs.y0.array();
  // (X'X)^{-1} entries needed for the slope
  const double inv01 = -sy0 / det;
  const double inv11 = nn / det;
  double slope_var;
  if (robust) {
    // HC1 sandwich: (X'X)^{-1} X' diag(e^2) X (X'X)^{-1} * n/(n-2)
    double m00 = 0.0, m01 = 0.0, m11 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e2 = resid[i] * resid[i];
      m00 += e2;
      m01 += e2 * cs.y0[i];
      m11 += e2 * cs.y0[i] * cs.y0[i];
    }
    const double r0 = inv01 * m00 + inv11 * m01;
    const double r1 = inv01 * m01 + inv11 * m11;
    slope_var = (r0 * inv01 + r1 * inv11) * nn / (nn - 2.0);
  } else {
    const double sigma2 = resid.squaredNorm() / (nn - 2.0);
    slope_var = sigma2 * inv11;
  }
  if (slope_var <= 0.0) throw ValidationError("pretrend_ols: zero residual variance");

  RegressionTestResult r;
  r.kind = RegressionTestResult::Kind::t_test;
  r.statistic = slope / std::sqrt(slope_var);
  r.df1 = static_cast<int>(n) - 2;
  r.df2 = 0;
  r.p_value = student_t_two_sided_p(r.statistic, static_cast<double>(r.df1));
  r.coefficients = Eigen::VectorXd::Constant(1, slope);
  r.robust = robust;
  return r;
}

// One-way F-test of Y1-Y0 on indicators for the discrete levels of Y0 among
// controls (first level omitted); classical covariance.
inline RegressionTestResult pretrend_ftest(const PanelDataset& ds, int max_levels = 50) {
  const detail::ControlSample cs = detail::control_sample(ds);
  const Eigen::Index n = cs.y0.size();
  const std::vector<double> levels = detail::distinct_sorted(cs.y0);
  const int L = static_cast<int>(levels.size());
  if (L < 2) {
    throw ValidationError("pretrend_ftest: pre-treatment outcome is constant among controls");
  }
  if (L > max_levels) {
    throw ValidationError("pretrend_ftest: " + std::to_string(L) +
                          " levels exceed the cap of " + std::to_string(max_levels) +
                          "; consider the covariate-conditional DML test instead");
  }

  std::map<double, std::pair<int, double>> groups;  // level -> (count, sum)
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& g = groups[cs.y0[i]];
    g.first += 1;
    g.second += cs.dy[i];
  }
  for (const auto& [level, g] : groups) {
    if (g.first < 2) {
      std::ostringstream msg;
      msg << "pretrend_ftest: level " << level << " has fewer than 2 control units";
      throw ValidationError(msg.str());
    }
  }
  if (n <= static_cast<Eigen::Index>(L)) {
    throw ValidationError("pretrend_ftest: no residual degrees of freedom");
  }

  // the dummy regression fits the level means, so the F-test reduces to
  // one-way ANOVA sums of squares
  const double grand_mean = cs.dy.mean();
  double rss1 = 0.0, rss0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& g = groups[cs.y0[i]];
    const double level_mean = g.second / g.first;
    rss1 += (cs.dy[i] - level_mean) * (cs.dy[i] - level_mean);
    rss0 += (cs.dy[i] - grand_mean) * (cs.dy[i] - grand_mean);
  }
  const int df1 = L - 1;
  const int df2 = static_cast<int>(n) - L;
  const double f_stat = ((rss0 - rss1) / df1) / (rss1 / df2);

  RegressionTestResult r;
  r.kind = RegressionTestResult::Kind::f_test;
  r.statistic = std::max(0.0, f_stat);
  r.df1 = df1;
  r.df2 = df2;
  r.p_value = f_sf(r.statistic, static_cast<double>(df1), static_cast<double>(df2));
  r.coefficients.resize(L - 1);
  const double base_mean = groups[levels[0]].second / groups[levels[0]].first;
  for (int l = 1; l < L; ++l) {
    const auto& g = groups[levels[static_cast<std::size_t>(l)]];
    r.coefficients[l - 1] = g.second / g.first - base_mean;
  }
  r.robust = false;
  return r;
}

}  // namespace trendtest
