#pragma once

// JSON and CSV result serialization. JSON objects are flat and keys are
// emitted in sorted order, so identical inputs give byte-identical output.

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "trendtest/dml.hpp"
#include "trendtest/errors.hpp"
#include "trendtest/pretrend.hpp"
#include "trendtest/sim.hpp"

namespace trendtest {

inline nlohmann::json to_json(const TestResult& r) {
  return {
      {"theta_hat", r.theta_hat}, {"se", r.se},
      {"t_stat", r.t_stat},       {"p_value", r.p_value},
      {"n_used", r.n_used},       {"n_trimmed", r.n_trimmed},
      {"folds", r.folds},         {"seed", r.seed},
  };
}

inline nlohmann::json to_json(const AtetResult& r) {
  return {
      {"atet_hat", r.atet_hat}, {"se", r.se},
      {"t_stat", r.t_stat},     {"p_value", r.p_value},
      {"n_used", r.n_used},     {"n_trimmed", r.n_trimmed},
      {"folds", r.folds},       {"seed", r.seed},
  };
}

inline nlohmann::json to_json(const RegressionTestResult& r) {
  nlohmann::json j = {
      {"statistic", r.statistic},
      {"p_value", r.p_value},
      {"robust", r.robust},
  };
  if (r.kind == RegressionTestResult::Kind::t_test) {
    j["kind"] = "t";
    j["df"] = r.df1;
  } else {
    j["kind"] = "F";
    j["df1"] = r.df1;
    j["df2"] = r.df2;
  }
  auto coefs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.coefficients.size(); ++i) coefs.push_back(r.coefficients[i]);
  j["coefficients"] = coefs;
  return j;
}

inline nlohmann::json to_json(const SimulationSummary& s, const SimulationConfig& cfg) {
  return {
      {"mean_est", s.mean_est},
      {"std", s.std},
      {"mean_se", s.mean_se},
      {"mean_pval", s.mean_pval},
      {"rejection_rate", s.rejection_rate},
      {"bias", s.bias},
      {"rmse", s.rmse},
      {"reps_completed", s.reps_completed},
      {"n", cfg.n},
      {"p", cfg.p},
      {"beta_u", cfg.beta_u},
      {"beta_q", cfg.beta_q},
      {"beta_v0", cfg.beta_v0},
      {"reps", cfg.reps},
      {"folds", cfg.folds},
      {"trim", cfg.trim},
      {"alpha", cfg.alpha},
      {"seed", cfg.seed},
  };
}

// Per-replication dump; failed replications are omitted (the summary already
// excludes them).
inline void write_rep_records(const std::vector<RepRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open output file '" + path + "'");
  out << "rep,theta_hat,se,pval,atet_hat,atet_se,n_trimmed\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& rec : records) {
    if (!rec.ok) continue;
    out << rec.rep << "," << num(rec.theta_hat) << "," << num(rec.theta_se) << ","
        << num(rec.pval) << "," << num(rec.atet_hat) << "," << num(rec.atet_se) << ","
        << rec.n_trimmed << "\n";
  }
}

}  // namespace trendtest
