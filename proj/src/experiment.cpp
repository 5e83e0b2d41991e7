#include "rsfair/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

namespace rsfair {

namespace {

using nlohmann::json;

// applies only the fields present in `j` on top of `hp`
Hyperparams hp_from_json(const json& j, Hyperparams hp = {}) {
  if (j.contains("k")) hp.k = j["k"].get<std::size_t>();
  if (j.contains("lambda_r")) hp.lambda_r = j["lambda_r"].get<double>();
  if (j.contains("lambda_f")) hp.lambda_f = j["lambda_f"].get<double>();
  if (j.contains("eta")) hp.eta = j["eta"].get<double>();
  if (j.contains("gamma")) hp.gamma = j["gamma"].get<double>();
  if (j.contains("gamma_decay")) hp.gamma_decay = j["gamma_decay"].get<double>();
  if (j.contains("rho")) hp.rho = j["rho"].get<double>();
  if (j.contains("tau")) hp.tau = j["tau"].get<double>();
  if (j.contains("rounds")) hp.rounds = j["rounds"].get<std::size_t>();
  if (j.contains("fairmf_sweeps")) hp.fairmf_sweeps = j["fairmf_sweeps"].get<std::size_t>();
  if (j.contains("fairmf_gamma_scale")) hp.fairmf_gamma_scale = j["fairmf_gamma_scale"].get<double>();
  if (j.contains("local_iters")) hp.local_iters = j["local_iters"].get<std::size_t>();
  if (j.contains("predict_round")) hp.predict_round = j["predict_round"].get<std::size_t>();
  if (j.contains("train_sampled_only"))
    hp.train_sampled_only = j["train_sampled_only"].get<bool>();
  if (j.contains("clamp_eval")) hp.clamp_eval = j["clamp_eval"].get<bool>();
  if (j.contains("workers")) hp.workers = j["workers"].get<int>();
  return hp;
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (const double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open plan: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("plan parse error: " + std::string(e.what()));
  }
  ExperimentPlan plan;
  const auto& ds = j.at("dataset");
  plan.format = ds.value("format", std::string("ml100k"));
  plan.data_dir = ds.at("dir").get<std::string>();
  plan.train_frac = ds.value("train_frac", 0.8);
  plan.repetitions = j.value("repetitions", std::size_t{10});
  plan.base_seed = j.value("base_seed", std::uint64_t{1});
  plan.output_dir = j.value("output_dir", std::string("out"));
  const Hyperparams defaults =
      j.contains("hyperparams") ? hp_from_json(j["hyperparams"]) : Hyperparams{};
  for (const auto& rj : j.at("runs")) {
    RunSpec run;
    run.name = rj.at("name").get<std::string>();
    run.mode = run_mode_from_string(rj.at("mode").get<std::string>());
    run.attribute = rj.value("attribute", std::string("gender"));
    run.hp = rj.contains("hyperparams") ? hp_from_json(rj["hyperparams"], defaults)
                                        : defaults;
    run.seed_user_frac = rj.value("seed_user_frac", 0.0);
    run.seed_keep_frac = rj.value("seed_keep_frac", 1.0);
    if (rj.contains("baseline")) run.baseline = rj["baseline"].get<std::string>();
    plan.runs.push_back(std::move(run));
  }
  if (plan.repetitions == 0) throw DataError("plan: repetitions must be >= 1");
  return plan;
}

PlanResult run_plan(const ExperimentPlan& plan) {
  std::filesystem::create_directories(plan.output_dir);
  const RatingDataset dataset =
      load_movielens(plan.data_dir, movielens_format_from_string(plan.format));

  PlanResult result;
  for (const auto& spec : plan.runs) {
    RunResult rr;
    rr.name = spec.name;
    for (std::size_t rep = 0; rep < plan.repetitions; ++rep) {
      const std::uint64_t seed = plan.base_seed + rep;
      rr.seeds.push_back(seed);
      try {
        Partition partition = split(dataset, plan.train_frac, spec.seed_user_frac, seed);
        if (spec.seed_keep_frac < 1.0)
          partition = restrict_seed_items(partition, spec.seed_keep_frac, seed);
        TrainingOptions opts;
        opts.attribute = spec.attribute;
        const TrainingResult tr =
            run_training(dataset, partition, spec.hp, spec.mode, seed, opts);
        const std::string file =
            spec.name + "_seed" + std::to_string(seed) + ".csv";
        write_trace_csv(tr.traces, spec.attribute, plan.output_dir / file);
        rr.trace_files.push_back(file);
        rr.traces.push_back(tr.traces);
      } catch (const std::exception& e) {
        rr.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
        std::cerr << "[warn] run '" << spec.name << "' " << rr.failures.back() << "\n";
        rr.traces.emplace_back();
        rr.trace_files.emplace_back();
      }
    }
    result.runs.push_back(std::move(rr));
  }

  // summary statistics over successful repetitions
  std::map<std::string, const RunResult*> by_name;
  for (auto& rr : result.runs) by_name[rr.name] = &rr;
  std::map<std::string, const RunSpec*> spec_by_name;
  for (const auto& spec : plan.runs) spec_by_name[spec.name] = &spec;

  for (auto& rr : result.runs) {
    const RunSpec& spec = *spec_by_name.at(rr.name);
    std::vector<double> rmses, ldaps_abs, ldaps_signed, reductions;
    for (std::size_t rep = 0; rep < rr.traces.size(); ++rep) {
      const auto& traces = rr.traces[rep];
      if (traces.empty()) continue;
      const RoundTrace& last = traces.back();
      rmses.push_back(last.rmse_test);
      const auto& gm = last.by_attribute.at(spec.attribute);
      ldaps_abs.push_back(gm.ldap_abs);
      ldaps_signed.push_back(gm.ldap);
      if (spec.baseline) {
        const auto it = by_name.find(*spec.baseline);
        if (it != by_name.end() && rep < it->second->traces.size() &&
            it->second->traces[rep].size() == traces.size()) {
          reductions.push_back(
              comm_cost(traces, it->second->traces[rep]).reduction_vs_full);
        }
      }
    }
    const Stats r = mean_std(rmses);
    rr.final_rmse_mean = r.mean;
    rr.final_rmse_std = r.stddev;
    const Stats la = mean_std(ldaps_abs);
    rr.final_ldap_abs_mean = la.mean;
    rr.final_ldap_abs_std = la.stddev;
    const Stats ls = mean_std(ldaps_signed);
    rr.final_ldap_signed_mean = ls.mean;
    rr.final_ldap_signed_std = ls.stddev;
    if (!reductions.empty()) {
      const Stats red = mean_std(reductions);
      rr.comm_reduction_mean = red.mean;
      rr.comm_reduction_std = red.stddev;
    }
  }

  // summary.json
  json summary;
  summary["dataset"] = {{"format", plan.format}, {"dir", plan.data_dir},
                        {"train_frac", plan.train_frac}};
  summary["repetitions"] = plan.repetitions;
  summary["base_seed"] = plan.base_seed;
  summary["runs"] = json::array();
  for (const auto& rr : result.runs) {
    const RunSpec& spec = *spec_by_name.at(rr.name);
    json rj;
    rj["name"] = rr.name;
    rj["mode"] = to_string(spec.mode);
    rj["attribute"] = spec.attribute;
    rj["tau"] = spec.hp.tau;
    rj["seed_user_frac"] = spec.seed_user_frac;
    rj["seeds"] = rr.seeds;
    rj["trace_files"] = rr.trace_files;
    rj["failures"] = rr.failures;
    rj["final_rmse"] = {{"mean", rr.final_rmse_mean}, {"std", rr.final_rmse_std}};
    rj["final_ldap_abs"] = {{"mean", rr.final_ldap_abs_mean}, {"std", rr.final_ldap_abs_std}};
    rj["final_ldap_signed"] = {{"mean", rr.final_ldap_signed_mean},
                               {"std", rr.final_ldap_signed_std}};
    if (rr.comm_reduction_mean) {
      rj["comm_reduction_vs_baseline"] = {{"mean", *rr.comm_reduction_mean},
                                          {"std", *rr.comm_reduction_std}};
    } else {
      rj["comm_reduction_vs_baseline"] = nullptr;
    }
    rj["wall_clock_reduction"] = nullptr;  // environment-specific, not measured
    summary["runs"].push_back(std::move(rj));
  }

  // plot-ready aggregates
  {
    std::ofstream lr(plan.output_dir / "ldap_vs_round.csv");
    lr << "run,round,ldap_mean,ldap_abs_mean\n";
    for (const auto& rr : result.runs) {
      const RunSpec& spec = *spec_by_name.at(rr.name);
      std::size_t rounds = 0;
      for (const auto& t : rr.traces) rounds = std::max(rounds, t.size());
      for (std::size_t round = 0; round < rounds; ++round) {
        double sum = 0.0, sum_abs = 0.0;
        std::size_t count = 0;
        for (const auto& t : rr.traces) {
          if (round >= t.size()) continue;
          const auto& gm = t[round].by_attribute.at(spec.attribute);
          sum += gm.ldap;
          sum_abs += gm.ldap_abs;
          ++count;
        }
        if (count == 0) continue;
        lr << rr.name << ',' << (round + 1) << ','
           << format_double(sum / static_cast<double>(count)) << ','
           << format_double(sum_abs / static_cast<double>(count)) << '\n';
      }
    }
  }
  {
    std::ofstream sc(plan.output_dir / "ldap_vs_rmse.csv");
    sc << "run,seed,rmse_final,ldap_abs_final\n";
    for (const auto& rr : result.runs) {
      const RunSpec& spec = *spec_by_name.at(rr.name);
      for (std::size_t rep = 0; rep < rr.traces.size(); ++rep) {
        if (rr.traces[rep].empty()) continue;
        const auto& last = rr.traces[rep].back();
        sc << rr.name << ',' << rr.seeds[rep] << ','
           << format_double(last.rmse_test) << ','
           << format_double(last.by_attribute.at(spec.attribute).ldap_abs) << '\n';
      }
    }
  }

  result.summary_path = plan.output_dir / "summary.json";
  std::ofstream out(result.summary_path);
  out << summary.dump(2) << "\n";
  return result;
}

}  // namespace rsfair
