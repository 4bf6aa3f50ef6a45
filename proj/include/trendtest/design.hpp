#pragma once

// Deterministic design expansion: pairwise interaction columns and squares
// of selected (non-binary) columns, with degenerate columns dropped.

#include <algorithm>
#include <string>
#include <vector>

#include "trendtest/errors.hpp"
#include "trendtest/panel.hpp"

namespace trendtest {

struct DesignSpec {
  bool include_pretreatment_outcome = false;
  bool pairwise_interactions = false;
  std::vector<std::string> squares_of;
};

namespace detail {

inline bool is_binary_column(const Eigen::VectorXd& col) {
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (col[i] != 0.0 && col[i] != 1.0) return false;
  }
  return true;
}

inline bool columns_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && a == b;
}

}  // namespace detail

// Appends, in order: interaction columns "a:b" for every raw pair (i < j),
// then squares "a^2" for the listed columns. Generated columns that are all
// zero, squares of binary columns, and exact duplicates of any earlier
// column are dropped; raw columns are always kept. Rows, outcomes, and
// treatment are untouched.
inline PanelDataset expand_design(const PanelDataset& ds, const DesignSpec& spec) {
  const Eigen::Index p = ds.p();
  for (const auto& name : spec.squares_of) {
    if (std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name) ==
        ds.covariate_names.end()) {
      throw SchemaError("squares_of references unknown column '" + name + "'");
    }
  }

  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> names;
  cols.reserve(static_cast<std::size_t>(p * (p + 1) / 2 + p + 2));
  for (Eigen::Index j = 0; j < p; ++j) {
    cols.push_back(ds.X.col(j));
    names.push_back(ds.covariate_names[static_cast<std::size_t>(j)]);
  }

  auto try_add = [&](Eigen::VectorXd col, const std::string& name) {
    if ((col.array() == 0.0).all()) return;
    for (const auto& existing : cols) {
      if (detail::columns_equal(existing, col)) return;
    }
    cols.push_back(std::move(col));
    names.push_back(name);
  };

  if (spec.pairwise_interactions) {
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = i + 1; j < p; ++j) {
        try_add(ds.X.col(i).cwiseProduct(ds.X.col(j)),
                ds.covariate_names[static_cast<std::size_t>(i)] + ":" +
                    ds.covariate_names[static_cast<std::size_t>(j)]);
      }
    }
  }
  for (const auto& name : spec.squares_of) {
    const auto it = std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name);
    const Eigen::Index j = it - ds.covariate_names.begin();
    if (detail::is_binary_column(ds.X.col(j))) continue;  // a^2 == a
    try_add(ds.X.col(j).cwiseAbs2(), name + "^2");
  }
  if (spec.include_pretreatment_outcome) {
    try_add(ds.y0, "y0");
  }

  PanelDataset out;
  out.unit_ids = ds.unit_ids;
  out.y0 = ds.y0;
  out.y1 = ds.y1;
  out.d = ds.d;
  out.covariate_names = names;
  out.X.resize(ds.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.X.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

}  // namespace trendtest
