#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsfair/dataset.hpp"
#include "rsfair/protocol.hpp"

namespace rsfair {

struct RunSpec {
  std::string name;
  RunMode mode = RunMode::rs_fedrec;
  std::string attribute = "gender";
  Hyperparams hp;
  double seed_user_frac = 0.0;   // overrides the plan's split for this run
  double seed_keep_frac = 1.0;
  std::optional<std::string> baseline;  // run name used for comm-cost reduction
};

struct ExperimentPlan {
  std::string format = "ml100k";
  std::string data_dir;
  double train_frac = 0.8;
  std::size_t repetitions = 10;
  std::uint64_t base_seed = 1;
  std::filesystem::path output_dir = "out";
  std::vector<RunSpec> runs;
};

ExperimentPlan load_plan(const std::filesystem::path& path);

struct RunResult {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RoundTrace>> traces;  // one per repetition
  std::vector<std::string> trace_files;
  std::vector<std::string> failures;

  double final_rmse_mean = 0.0, final_rmse_std = 0.0;
  double final_ldap_abs_mean = 0.0, final_ldap_abs_std = 0.0;
  double final_ldap_signed_mean = 0.0, final_ldap_signed_std = 0.0;
  std::optional<double> comm_reduction_mean, comm_reduction_std;
};

struct PlanResult {
  std::vector<RunResult> runs;
  std::filesystem::path summary_path;
};

// Executes every run x repetition with derived seeds base+0..reps-1, writes
// per-run trace CSVs, summary.json, and plot-ready aggregates (ldap vs round,
// ldap vs rmse scatter). A failing run is recorded and the rest continue.
PlanResult run_plan(const ExperimentPlan& plan);

}  // namespace rsfair
