// Command-line front end: common-trend test, ATET estimation, covariate-free
// pre-trend tests, and the Monte Carlo harness. Results go to standard
// output as a single JSON document; exit codes are 0 (success), 2 (usage),
// 1 (runtime failure).

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "trendtest/csv.hpp"
#include "trendtest/design.hpp"
#include "trendtest/dml.hpp"
#include "trendtest/pretrend.hpp"
#include "trendtest/report.hpp"
#include "trendtest/sim.hpp"

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

trendtest::DesignSpec parse_expand(const std::string& text) {
  trendtest::DesignSpec spec;
  if (text.empty()) return spec;
  for (const auto& token : split(text, ',')) {
    if (token == "interactions") {
      spec.pairwise_interactions = true;
    } else if (token == "y0") {
      spec.include_pretreatment_outcome = true;
    } else if (token.rfind("squares:", 0) == 0) {
      const auto cols = split(token.substr(8), ':');
      for (const auto& c : cols) {
        if (!c.empty()) spec.squares_of.push_back(c);
      }
    } else {
      throw UsageError("unknown --expand token '" + token +
                       "' (expected interactions, y0, or squares:<col>:<col>...)");
    }
  }
  return spec;
}

struct InputFlags {
  std::string input;
  std::string y0 = "y0";
  std::string y1 = "y1";
  std::string d = "d";
  std::string id;
  std::string covariates = "all-others";
};

void add_input_flags(CLI::App* cmd, InputFlags& flags, bool with_covariates) {
  cmd->add_option("--input", flags.input, "input CSV file with a header row")->required();
  cmd->add_option("--y0", flags.y0, "pre-treatment outcome column")->capture_default_str();
  cmd->add_option("--y1", flags.y1, "post-treatment outcome column")->capture_default_str();
  cmd->add_option("--d", flags.d, "binary treatment column")->capture_default_str();
  cmd->add_option("--id", flags.id, "optional unit id column");
  if (with_covariates) {
    cmd->add_option("--covariates", flags.covariates,
                    "comma-separated covariate columns, 'all-others', or 'none'")
        ->capture_default_str();
  }
}

trendtest::PanelDataset load_panel(const InputFlags& flags) {
  trendtest::CsvSchema schema;
  schema.y0 = flags.y0;
  schema.y1 = flags.y1;
  schema.d = flags.d;
  if (!flags.id.empty()) schema.id = flags.id;
  if (flags.covariates == "all-others") {
    schema.all_other_columns = true;
  } else if (flags.covariates == "none" || flags.covariates.empty()) {
    schema.all_other_columns = false;
  } else {
    schema.all_other_columns = false;
    schema.covariates = split(flags.covariates, ',');
  }
  return trendtest::load_csv(flags.input, schema);
}

void emit(const nlohmann::json& j, const std::string& output_path) {
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!output_path.empty()) {
    std::ofstream out(output_path);
    if (!out) throw trendtest::SchemaError("cannot open output file '" + output_path + "'");
    out << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Placebo-free common-trend testing for two-period panel data"};
  app.require_subcommand(1);

  InputFlags test_in, atet_in, ols_in, ftest_in;
  ols_in.covariates = "none";  // pre-trend tests never use covariates
  ftest_in.covariates = "none";
  std::string test_expand, atet_expand;
  std::string test_output, atet_output, ols_output, ftest_output, sim_output, sim_per_rep;
  int test_folds = 2, atet_folds = 2;
  double test_trim = 0.99, atet_trim = 0.99;
  std::uint64_t test_seed = 1, atet_seed = 1;
  int test_cv = 10, atet_cv = 10;
  int test_grid = 100, atet_grid = 100;
  int test_threads = 1, atet_threads = 1;
  bool ols_classical = false;
  int ftest_max_levels = 50;
  trendtest::SimulationConfig sim_cfg;
  sim_cfg.n = 1000;
  sim_cfg.p = 200;
  sim_cfg.reps = 1000;
  int sim_threads = 1;

  auto add_dml_flags = [](CLI::App* cmd, int& folds, double& trim, std::uint64_t& seed,
                          int& cv, int& grid, int& threads, std::string& expand,
                          std::string& output) {
    cmd->add_option("--folds", folds, "cross-fitting folds")->capture_default_str();
    cmd->add_option("--trim", trim, "drop units with propensity above this")->capture_default_str();
    cmd->add_option("--seed", seed, "master seed")->capture_default_str();
    cmd->add_option("--cv-folds", cv, "folds for penalty cross-validation")->capture_default_str();
    cmd->add_option("--grid", grid, "penalty grid size")->capture_default_str();
    cmd->add_option("--threads", threads, "worker threads for fold training")->capture_default_str();
    cmd->add_option("--expand", expand,
                    "design expansion: interactions, y0, squares:<col>:<col>...")
        ->capture_default_str();
    cmd->add_option("--output", output, "also write the JSON result to this file");
  };

  CLI::App* cmd_test = app.add_subcommand("test", "doubly robust common-trend test");
  add_input_flags(cmd_test, test_in, true);
  add_dml_flags(cmd_test, test_folds, test_trim, test_seed, test_cv, test_grid, test_threads,
                test_expand, test_output);

  CLI::App* cmd_atet = app.add_subcommand("atet", "doubly robust DiD estimate of the ATET");
  add_input_flags(cmd_atet, atet_in, true);
  add_dml_flags(cmd_atet, atet_folds, atet_trim, atet_seed, atet_cv, atet_grid, atet_threads,
                atet_expand, atet_output);

  CLI::App* cmd_ols = app.add_subcommand("pretrend-ols", "t-test of Y1-Y0 on a binary Y0 (controls only)");
  add_input_flags(cmd_ols, ols_in, false);
  cmd_ols->add_flag("--classical", ols_classical, "classical instead of HC1 standard errors");
  cmd_ols->add_option("--output", ols_output, "also write the JSON result to this file");

  CLI::App* cmd_ftest = app.add_subcommand("pretrend-ftest", "F-test of Y1-Y0 on discrete Y0 levels (controls only)");
  add_input_flags(cmd_ftest, ftest_in, false);
  cmd_ftest->add_option("--max-levels", ftest_max_levels, "largest allowed level count")->capture_default_str();
  cmd_ftest->add_option("--output", ftest_output, "also write the JSON result to this file");

  CLI::App* cmd_sim = app.add_subcommand("simulate", "Monte Carlo size/power study");
  cmd_sim->add_option("--n", sim_cfg.n, "units per replication")->capture_default_str();
  cmd_sim->add_option("--p", sim_cfg.p, "covariate count")->capture_default_str();
  cmd_sim->add_option("--beta-u", sim_cfg.beta_u, "trend heterogeneity in the fixed effect")->capture_default_str();
  cmd_sim->add_option("--beta-q", sim_cfg.beta_q, "time-varying confounder loading")->capture_default_str();
  cmd_sim->add_option("--beta-v0", sim_cfg.beta_v0, "pre-period noise loading")->capture_default_str();
  cmd_sim->add_option("--reps", sim_cfg.reps, "replications")->capture_default_str();
  cmd_sim->add_option("--seed", sim_cfg.seed, "master seed")->capture_default_str();
  cmd_sim->add_option("--folds", sim_cfg.folds, "cross-fitting folds")->capture_default_str();
  cmd_sim->add_option("--trim", sim_cfg.trim, "propensity trimming threshold")->capture_default_str();
  cmd_sim->add_option("--alpha", sim_cfg.alpha, "test level for the rejection rate")->capture_default_str();
  cmd_sim->add_option("--cv-folds", sim_cfg.cv_folds, "folds for penalty cross-validation")->capture_default_str();
  cmd_sim->add_option("--grid", sim_cfg.grid_size, "penalty grid size")->capture_default_str();
  cmd_sim->add_option("--threads", sim_threads, "parallel replications")->capture_default_str();
  cmd_sim->add_option("--per-rep", sim_per_rep, "write per-replication CSV to this file");
  cmd_sim->add_option("--output", sim_output, "also write the JSON summary to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (cmd_test->parsed()) {
      trendtest::DmlConfig cfg;
      cfg.folds = test_folds;
      cfg.trim = test_trim;
      cfg.seed = test_seed;
      cfg.cv_folds = test_cv;
      cfg.grid_size = test_grid;
      cfg.threads = test_threads;
      cfg.design = parse_expand(test_expand);
      const auto ds = load_panel(test_in);
      emit(trendtest::to_json(trendtest::test_common_trends(ds, cfg)), test_output);
    } else if (cmd_atet->parsed()) {
      trendtest::DmlConfig cfg;
      cfg.folds = atet_folds;
      cfg.trim = atet_trim;
      cfg.seed = atet_seed;
      cfg.cv_folds = atet_cv;
      cfg.grid_size = atet_grid;
      cfg.threads = atet_threads;
      cfg.design = parse_expand(atet_expand);
      const auto ds = load_panel(atet_in);
      emit(trendtest::to_json(trendtest::estimate_atet(ds, cfg)), atet_output);
    } else if (cmd_ols->parsed()) {
      const auto ds = load_panel(ols_in);
      emit(trendtest::to_json(trendtest::pretrend_ols(ds, !ols_classical)), ols_output);
    } else if (cmd_ftest->parsed()) {
      const auto ds = load_panel(ftest_in);
      emit(trendtest::to_json(trendtest::pretrend_ftest(ds, ftest_max_levels)), ftest_output);
    } else if (cmd_sim->parsed()) {
      const auto result = trendtest::run_monte_carlo(sim_cfg, sim_threads);
      if (!sim_per_rep.empty()) trendtest::write_rep_records(result.records, sim_per_rep);
      emit(trendtest::to_json(result.summary, sim_cfg), sim_output);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
