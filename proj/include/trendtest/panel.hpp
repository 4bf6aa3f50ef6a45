#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "trendtest/errors.hpp"

namespace trendtest {

// Two-period panel: outcomes at t=0 and t=1, binary treatment, covariates.
// Row i across all members refers to the same unit.
struct PanelDataset {
  std::vector<std::string> unit_ids;  // optional, empty when absent
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXi d;
  Eigen::MatrixXd X;  // n x p, p may be 0
  std::vector<std::string> covariate_names;

  Eigen::Index n() const { return y0.size(); }
  Eigen::Index p() const { return X.cols(); }

  Eigen::VectorXd outcome_change() const { return y1 - y0; }

  int n_treated() const {
    int c = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) c += (d[i] == 1);
    return c;
  }
};

inline void validate(const PanelDataset& ds) {
  const Eigen::Index n = ds.y0.size();
  if (n < 2) throw ValidationError("panel needs at least 2 units, got " + std::to_string(n));
  if (ds.y1.size() != n || ds.d.size() != n || ds.X.rows() != n) {
    throw ValidationError("panel columns disagree on length");
  }
  if (!ds.unit_ids.empty() && static_cast<Eigen::Index>(ds.unit_ids.size()) != n) {
    throw ValidationError("unit_ids length differs from panel length");
  }
  if (static_cast<Eigen::Index>(ds.covariate_names.size()) != ds.X.cols()) {
    throw ValidationError("covariate_names length differs from covariate count");
  }
  int treated = 0, control = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.d[i] != 0 && ds.d[i] != 1) {
      throw ValidationError("treatment indicator must be 0 or 1, found " +
                            std::to_string(ds.d[i]) + " in row " + std::to_string(i + 1));
    }
    (ds.d[i] == 1 ? treated : control)++;
    if (!std::isfinite(ds.y0[i]) || !std::isfinite(ds.y1[i])) {
      throw ValidationError("non-finite outcome in row " + std::to_string(i + 1));
    }
  }
  if (treated == 0) throw ValidationError("panel has no treated unit");
  if (control == 0) throw ValidationError("panel has no control unit");
  if (ds.X.size() > 0 && !ds.X.allFinite()) {
    throw ValidationError("non-finite covariate value");
  }
}

}  // namespace trendtest
