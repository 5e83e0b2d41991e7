#include "rsfair/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rsfair {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double rmse(const std::vector<std::pair<double, double>>& pairs, bool clamp,
            double lo, double hi) {
  if (pairs.empty()) throw std::invalid_argument("rmse: empty input");
  double sum = 0.0;
  for (const auto& [r_hat, r] : pairs) {
    const double p = clamp ? std::clamp(r_hat, lo, hi) : r_hat;
    const double e = p - r;
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

GroupRmse group_rmse(const std::vector<UserPredictions>& predictions,
                     const GroupPartition& partition, bool clamp, double lo, double hi) {
  double sum_g = 0.0, sum_ng = 0.0;
  std::size_t n_g = 0, n_ng = 0;
  for (const auto& up : predictions) {
    const bool g = partition.in_disadvantaged[up.user_id] != 0;
    for (const auto& [r_hat, r] : up.pairs) {
      const double p = clamp ? std::clamp(r_hat, lo, hi) : r_hat;
      const double e = p - r;
      if (g) {
        sum_g += e * e;
        ++n_g;
      } else {
        sum_ng += e * e;
        ++n_ng;
      }
    }
  }
  if (n_g == 0 || n_ng == 0)
    throw std::invalid_argument("group_rmse: a group has no test ratings");
  return {std::sqrt(sum_g / static_cast<double>(n_g)),
          std::sqrt(sum_ng / static_cast<double>(n_ng))};
}

std::string trace_csv(const std::vector<RoundTrace>& traces, const std::string& attribute) {
  std::string out =
      "round,mode,tau,rmse_test,rmse_group_a,rmse_group_b,ldap,params_uploaded,gamma\n";
  for (const auto& t : traces) {
    const auto it = t.by_attribute.find(attribute);
    if (it == t.by_attribute.end())
      throw std::invalid_argument("trace has no metrics for attribute '" + attribute + "'");
    out += std::to_string(t.round);
    out += ',';
    out += t.mode;
    out += ',';
    out += format_double(t.tau);
    out += ',';
    out += format_double(t.rmse_test);
    out += ',';
    out += format_double(it->second.rmse_g);
    out += ',';
    out += format_double(it->second.rmse_ng);
    out += ',';
    out += format_double(it->second.ldap);
    out += ',';
    out += std::to_string(t.params_uploaded);
    out += ',';
    out += format_double(t.gamma);
    out += '\n';
  }
  return out;
}

void write_trace_csv(const std::vector<RoundTrace>& traces, const std::string& attribute,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path.string());
  out << trace_csv(traces, attribute);
}

CommCostReport comm_cost(const std::vector<RoundTrace>& trace,
                         const std::vector<RoundTrace>& full_participation_baseline) {
  if (trace.size() != full_participation_baseline.size())
    throw std::invalid_argument("comm_cost: mismatched round counts");
  if (trace.empty()) throw std::invalid_argument("comm_cost: empty trace");
  CommCostReport report;
  std::uint64_t baseline_total = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    report.total_params += trace[i].params_uploaded;
    baseline_total += full_participation_baseline[i].params_uploaded;
  }
  report.per_round_mean =
      static_cast<double>(report.total_params) / static_cast<double>(trace.size());
  if (baseline_total == 0) throw std::invalid_argument("comm_cost: baseline uploaded nothing");
  report.reduction_vs_full = 1.0 - static_cast<double>(report.total_params) /
                                       static_cast<double>(baseline_total);
  return report;
}

}  // namespace rsfair
