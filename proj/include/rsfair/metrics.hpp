#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rsfair/fairness.hpp"

namespace rsfair {

// sqrt(mean((r_hat - r)^2)); with clamp, predictions are clipped into
// [lo, hi] before the residual (evaluation-time only).
double rmse(const std::vector<std::pair<double, double>>& pairs, bool clamp,
            double lo = 1.0, double hi = 5.0);

struct GroupRmse {
  double rmse_g = 0.0;   // disadvantaged
  double rmse_ng = 0.0;  // advantaged
};

GroupRmse group_rmse(const std::vector<UserPredictions>& predictions,
                     const GroupPartition& partition, bool clamp, double lo = 1.0,
                     double hi = 5.0);

// Per-attribute slice of a round's evaluation.
struct GroupMetrics {
  double rmse_g = 0.0;
  double rmse_ng = 0.0;
  double ldap = 0.0;
  double ldap_abs = 0.0;
};

struct RoundTrace {
  std::size_t round = 0;  // 1-based
  std::string mode;
  double tau = 1.0;
  double rmse_test = 0.0;
  std::map<std::string, GroupMetrics> by_attribute;
  std::uint64_t params_uploaded = 0;
  std::size_t clients_uploaded = 0;
  double gamma = 0.0;
  double wall_seconds = 0.0;  // informational only
};

// Pinned CSV schema:
//   round,mode,tau,rmse_test,rmse_group_a,rmse_group_b,ldap,params_uploaded,gamma
// group_a = disadvantaged, group_b = advantaged for `attribute`. Doubles are
// written in shortest round-trip form, so equal traces produce equal bytes.
std::string trace_csv(const std::vector<RoundTrace>& traces, const std::string& attribute);
void write_trace_csv(const std::vector<RoundTrace>& traces, const std::string& attribute,
                     const std::filesystem::path& path);

struct CommCostReport {
  std::uint64_t total_params = 0;
  double per_round_mean = 0.0;
  double reduction_vs_full = 0.0;  // 1 - params(tau) / params(tau=1), matched rounds
  // The wall-clock cost reduction is environment-specific and is not
  // measured; the field stays null in reports.
  std::optional<double> wall_clock_reduction;
};

CommCostReport comm_cost(const std::vector<RoundTrace>& trace,
                         const std::vector<RoundTrace>& full_participation_baseline);

// Shortest round-trip decimal form of a double (std::to_chars).
std::string format_double(double v);

}  // namespace rsfair
