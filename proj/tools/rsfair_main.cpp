// rsfair: federated matrix-factorization recommender simulator.
//
// Subcommands: ingest, train, bound, mc, elbow, run-plan, synth.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rsfair/dataset.hpp"
#include "rsfair/experiment.hpp"
#include "rsfair/matrix.hpp"
#include "rsfair/metrics.hpp"
#include "rsfair/protocol.hpp"
#include "rsfair/sampling.hpp"
#include "rsfair/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SplitFlags {
  std::string format = "ml100k";
  std::string data_dir;
  double train_frac = 0.8;
  double seed_user_frac = 0.0;
  double seed_keep_frac = 1.0;
  std::uint64_t seed = 1;
};

void add_split_flags(CLI::App* cmd, SplitFlags* flags) {
  cmd->add_option("--format", flags->format, "dataset format: ml100k or ml1m")
      ->check(CLI::IsMember({"ml100k", "ml1m"}));
  cmd->add_option("--dir", flags->data_dir, "directory with the dataset files");
  cmd->add_option("--train-frac", flags->train_frac, "per-user train fraction")
      ->check(CLI::Range(0.01, 0.99));
  cmd->add_option("--seed-user-frac", flags->seed_user_frac,
                  "share of ratings withheld as non-participating seed users")
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--keep-frac", flags->seed_keep_frac,
                  "fraction of each seed user's ratings the server keeps")
      ->check(CLI::Range(0.01, 1.0));
  cmd->add_option("--seed", flags->seed, "rng seed");
}

struct TrainFlags {
  SplitFlags split;
  std::string manifest_path;
  std::string mode = "rs-fedrec";
  std::string attribute = "gender";
  std::string out_dir = "out";
  std::size_t checkpoint_every = 0;
  rsfair::Hyperparams hp;
};

void add_hp_flags(CLI::App* cmd, rsfair::Hyperparams* hp) {
  cmd->add_option("--k", hp->k, "latent dimension");
  cmd->add_option("--lambda-r", hp->lambda_r, "L2 regularizer");
  cmd->add_option("--lambda-f", hp->lambda_f, "fairness penalizer (FairMF)");
  cmd->add_option("--eta", hp->eta, "local fair-proximity weight");
  cmd->add_option("--gamma", hp->gamma, "initial learning rate");
  cmd->add_option("--gamma-decay", hp->gamma_decay, "per-round learning-rate decay");
  cmd->add_option("--rho", hp->rho, "virtual-item ratio");
  cmd->add_option("--tau", hp->tau, "client sampling fraction")->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--rounds", hp->rounds, "communication rounds");
  cmd->add_option("--ts", hp->fairmf_sweeps, "FairMF sweeps per round");
  cmd->add_option("--fairmf-gamma-scale", hp->fairmf_gamma_scale,
                  "server per-rating step as a fraction of the round gamma");
  cmd->add_option("--local-iters", hp->local_iters, "local user-vector iterations");
  cmd->add_option("--predict-round", hp->predict_round,
                  "first round that uses hybrid filling");
  cmd->add_flag("--train-sampled-only", hp->train_sampled_only,
                "skip local training for unsampled clients");
  cmd->add_option("--workers", hp->workers, "worker threads (0 = auto)");
  cmd->add_flag("--no-clamp-eval",
                [hp](std::int64_t) { hp->clamp_eval = false; },
                "disable prediction clamping at evaluation");
}

rsfair::RatingDataset load_dataset_or_die(const SplitFlags& flags) {
  if (flags.data_dir.empty())
    throw CLI::ValidationError("--dir", "dataset directory is required");
  return rsfair::load_movielens(flags.data_dir,
                                rsfair::movielens_format_from_string(flags.format));
}

rsfair::Partition make_partition(const rsfair::RatingDataset& dataset,
                                 const SplitFlags& flags) {
  auto partition =
      rsfair::split(dataset, flags.train_frac, flags.seed_user_frac, flags.seed);
  if (flags.seed_keep_frac < 1.0)
    partition = rsfair::restrict_seed_items(partition, flags.seed_keep_frac, flags.seed);
  return partition;
}

int cmd_ingest(const SplitFlags& flags, const std::string& out_path) {
  const auto dataset = load_dataset_or_die(flags);
  const auto partition = make_partition(dataset, flags);
  const auto manifest =
      rsfair::make_manifest(dataset, partition, flags.format, flags.data_dir);
  rsfair::write_manifest(manifest, out_path);
  std::cout << "wrote " << out_path << ": " << manifest.n << " users, " << manifest.m
            << " items, " << manifest.rating_count << " ratings ("
            << manifest.seed_users.size() << " seed users, "
            << manifest.server_seed_count << " seed ratings)\n";
  return 0;
}

int cmd_train(TrainFlags& flags) {
  SplitFlags split = flags.split;
  if (!flags.manifest_path.empty()) {
    const auto manifest = rsfair::read_manifest(flags.manifest_path);
    split.format = manifest.format;
    split.data_dir = manifest.data_dir;
    split.train_frac = manifest.train_frac;
    split.seed_user_frac = manifest.seed_user_frac;
    split.seed_keep_frac = manifest.seed_keep_frac;
    split.seed = manifest.rng_seed;
  }
  const auto dataset = load_dataset_or_die(split);
  const auto partition = make_partition(dataset, split);
  if (!flags.manifest_path.empty()) {
    const auto manifest = rsfair::read_manifest(flags.manifest_path);
    if (partition.seed_users != manifest.seed_users)
      throw rsfair::DataError("manifest does not match the dataset: seed users differ");
  }

  const auto mode = rsfair::run_mode_from_string(flags.mode);
  fs::create_directories(flags.out_dir);

  rsfair::TrainingOptions opts;
  opts.attribute = flags.attribute;
  opts.checkpoint_every = flags.checkpoint_every;
  opts.checkpoint_dir = fs::path(flags.out_dir) / "checkpoints";

  const auto result =
      rsfair::run_training(dataset, partition, flags.hp, mode, split.seed, opts);

  const fs::path trace_path = fs::path(flags.out_dir) / "trace.csv";
  rsfair::write_trace_csv(result.traces, flags.attribute, trace_path);

  // echo the configuration for exact replay
  json config;
  config["mode"] = flags.mode;
  config["attribute"] = flags.attribute;
  config["seed"] = split.seed;
  config["split"] = {{"format", split.format},
                     {"dir", split.data_dir},
                     {"train_frac", split.train_frac},
                     {"seed_user_frac", split.seed_user_frac},
                     {"seed_keep_frac", split.seed_keep_frac}};
  config["hyperparams"] = {{"k", flags.hp.k},
                           {"lambda_r", flags.hp.lambda_r},
                           {"lambda_f", flags.hp.lambda_f},
                           {"eta", flags.hp.eta},
                           {"gamma", flags.hp.gamma},
                           {"gamma_decay", flags.hp.gamma_decay},
                           {"rho", flags.hp.rho},
                           {"tau", flags.hp.tau},
                           {"rounds", flags.hp.rounds},
                           {"fairmf_sweeps", flags.hp.fairmf_sweeps},
                           {"fairmf_gamma_scale", flags.hp.fairmf_gamma_scale},
                           {"local_iters", flags.hp.local_iters},
                           {"predict_round", flags.hp.predict_round},
                           {"train_sampled_only", flags.hp.train_sampled_only},
                           {"clamp_eval", flags.hp.clamp_eval},
                           {"workers", flags.hp.workers}};
  std::ofstream(fs::path(flags.out_dir) / "config.json") << config.dump(2) << "\n";

  // summary with final metrics and wall time
  const auto& last = result.traces.back();
  json summary;
  summary["rounds"] = result.traces.size();
  summary["final_rmse"] = last.rmse_test;
  summary["clients"] = result.population.size();
  double wall = 0.0;
  for (const auto& t : result.traces) wall += t.wall_seconds;
  summary["wall_seconds"] = wall;
  json ldap_series = json::array();
  for (const auto& t : result.traces)
    ldap_series.push_back(t.by_attribute.at(flags.attribute).ldap);
  summary["ldap_series"] = ldap_series;
  for (const auto& [attr, gm] : last.by_attribute) {
    summary["final_by_attribute"][attr] = {{"rmse_disadvantaged", gm.rmse_g},
                                           {"rmse_advantaged", gm.rmse_ng},
                                           {"ldap", gm.ldap},
                                           {"ldap_abs", gm.ldap_abs}};
  }
  std::ofstream(fs::path(flags.out_dir) / "summary.json") << summary.dump(2) << "\n";

  // standalone fairness report: signed and absolute L^dap per attribute
  json fairness;
  for (const auto& [attr, gm] : last.by_attribute)
    fairness[attr] = {{"ldap", gm.ldap}, {"ldap_abs", gm.ldap_abs}};
  std::ofstream(fs::path(flags.out_dir) / "fairness-report.json")
      << fairness.dump(2) << "\n";

  std::cout << "wrote " << trace_path.string() << " (" << result.traces.size()
            << " rounds, final rmse " << rsfair::format_double(last.rmse_test) << ")\n";
  return 0;
}

int cmd_bound(bool theorem1, std::size_t n, double tau, double eps, double lo, double hi,
              std::size_t sample, std::optional<std::size_t> clusters,
              const std::string& out_path) {
  json j;
  if (theorem1) {
    rsfair::BoundQuery q;
    q.n = n;
    q.tau = tau;
    q.epsilon = eps;
    q.range_lo = lo;
    q.range_hi = hi;
    j["bound_type"] = "theorem1";
    j["n"] = n;
    j["tau"] = tau;
    j["epsilon"] = eps;
    j["range"] = {lo, hi};
    j["bound"] = rsfair::theorem1_bound(q);
  } else {
    j["bound_type"] = "lemma1";
    j["sample_size"] = sample;
    j["epsilon"] = eps;
    if (clusters) j["clusters"] = *clusters;
    j["bound"] = rsfair::lemma1_bound(sample, eps);
  }
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) std::ofstream(out_path) << text;
  return 0;
}

int cmd_mc(std::size_t n, std::size_t k, double tau, std::size_t trials,
           double deviation, std::uint64_t seed, const std::string& out_path) {
  const auto report = rsfair::cluster_representation_mc(n, k, tau, trials, deviation, seed);
  std::string csv = "statistic,value\n";
  csv += "mean_per_cluster_count," + rsfair::format_double(report.mean_per_cluster_count) + "\n";
  csv += "exceedance_probability," + rsfair::format_double(report.exceedance_probability) + "\n";
  csv += "min_per_cluster_count," + std::to_string(report.min_per_cluster_count) + "\n";
  std::cout << csv;
  if (!out_path.empty()) std::ofstream(out_path) << csv;
  return 0;
}

int cmd_elbow(const std::string& input, std::size_t k_min, std::size_t k_max,
              std::uint64_t seed, const std::string& out_path) {
  rsfair::Matrix vectors;
  if (input.ends_with(".json"))
    vectors = rsfair::load_matrix_json(input);
  else
    vectors = rsfair::load_matrix(input);
  std::vector<std::size_t> ks;
  for (std::size_t k = k_min; k <= k_max; ++k) ks.push_back(k);
  const auto curve = rsfair::kmeans_elbow(vectors, ks, seed);
  std::string csv = "k,inertia\n";
  for (const auto& [k, inertia] : curve)
    csv += std::to_string(k) + "," + rsfair::format_double(inertia) + "\n";
  std::cout << csv;
  if (!out_path.empty()) std::ofstream(out_path) << csv;
  return 0;
}

int cmd_run_plan(const std::string& plan_path, const std::string& out_dir_override) {
  auto plan = rsfair::load_plan(plan_path);
  if (!out_dir_override.empty()) plan.output_dir = out_dir_override;
  const auto result = rsfair::run_plan(plan);
  std::size_t failures = 0;
  for (const auto& rr : result.runs) failures += rr.failures.size();
  std::cout << "wrote " << result.summary_path.string() << " (" << result.runs.size()
            << " runs";
  if (failures > 0) std::cout << ", " << failures << " failed repetition(s)";
  std::cout << ")\n";
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated matrix-factorization recommender simulator"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a dataset and write a partition manifest");
  SplitFlags ingest_flags;
  std::string manifest_out = "manifest.json";
  add_split_flags(ingest, &ingest_flags);
  ingest->add_option("--out", manifest_out, "manifest path");

  // train
  auto* train = app.add_subcommand("train", "run one training configuration");
  TrainFlags train_flags;
  add_split_flags(train, &train_flags.split);
  add_hp_flags(train, &train_flags.hp);
  train->add_option("--manifest", train_flags.manifest_path,
                    "partition manifest (overrides the split flags)");
  train->add_option("--mode", train_flags.mode, "mf-central | fedrec | rs-fedrec | rs-fairfrs")
      ->check(CLI::IsMember({"mf-central", "fedrec", "rs-fedrec", "rs-fairfrs"}));
  train->add_option("--attribute", train_flags.attribute, "sensitive attribute")
      ->check(CLI::IsMember({"gender", "age"}));
  train->add_option("--out-dir", train_flags.out_dir, "output directory")
      ->envname("RSFAIR_OUT_DIR");
  train->add_option("--checkpoint-every", train_flags.checkpoint_every,
                    "write item-vector checkpoints every N rounds (0 = off)");

  // bound
  auto* bound = app.add_subcommand("bound", "evaluate a concentration bound");
  bool use_theorem1 = false, use_lemma1 = false;
  std::size_t bound_n = 6000, bound_sample = 2100;
  double bound_tau = 0.35, bound_eps = 0.25, range_lo = 1.0, range_hi = 5.0;
  std::optional<std::size_t> bound_clusters;
  std::string bound_out;
  bound->add_flag("--theorem1", use_theorem1, "use the rating-deviation bound");
  bound->add_flag("--lemma1", use_lemma1, "use the cluster-representation bound");
  bound->add_option("--n", bound_n, "client population");
  bound->add_option("--tau", bound_tau, "sampled fraction")->check(CLI::Range(1e-9, 1.0));
  bound->add_option("--eps", bound_eps, "deviation epsilon");
  bound->add_option("--range", [&](const std::vector<std::string>& vals) {
    range_lo = std::stod(vals.at(0));
    range_hi = std::stod(vals.at(1));
    return true;
  }, "rating range: two values a b")->expected(2);
  bound->add_option("--sample", bound_sample, "sample size |C^tau| (lemma1)");
  bound->add_option("--clusters", [&](const std::vector<std::string>& vals) {
    bound_clusters = std::stoul(vals.at(0));
    return true;
  }, "cluster count K, echoed in the report");
  bound->add_option("--out", bound_out, "also write the JSON here");

  // mc
  auto* mc = app.add_subcommand("mc", "cluster-representation Monte Carlo");
  std::size_t mc_n = 6000, mc_k = 20, mc_trials = 500;
  double mc_tau = 0.35, mc_dev = 0.15;
  std::uint64_t mc_seed = 1;
  std::string mc_out;
  mc->add_option("--n", mc_n, "client population")->check(CLI::PositiveNumber);
  mc->add_option("--k", mc_k, "cluster count")->check(CLI::PositiveNumber);
  mc->add_option("--tau", mc_tau, "sampled fraction")->check(CLI::Range(1e-9, 1.0));
  mc->add_option("--trials", mc_trials, "trials")->check(CLI::PositiveNumber);
  mc->add_option("--deviation", mc_dev, "relative deviation threshold");
  mc->add_option("--seed", mc_seed, "rng seed");
  mc->add_option("--out", mc_out, "also write the CSV here");

  // elbow
  auto* elbow = app.add_subcommand("elbow", "k-means inertia curve over item vectors");
  std::string elbow_input, elbow_out;
  std::size_t elbow_kmin = 2, elbow_kmax = 40;
  std::uint64_t elbow_seed = 1;
  elbow->add_option("--input", elbow_input, "matrix dump (.mat binary or .json)")->required();
  elbow->add_option("--k-min", elbow_kmin, "smallest K");
  elbow->add_option("--k-max", elbow_kmax, "largest K");
  elbow->add_option("--seed", elbow_seed, "rng seed");
  elbow->add_option("--out", elbow_out, "also write the CSV here");

  // run-plan
  auto* plan = app.add_subcommand("run-plan", "execute an experiment plan");
  std::string plan_path, plan_out;
  plan->add_option("--plan", plan_path, "plan JSON path")->required();
  plan->add_option("--out-dir", plan_out, "override the plan's output directory")
      ->envname("RSFAIR_OUT_DIR");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic MovieLens-format corpus");
  rsfair::SyntheticSpec synth_spec;
  std::string synth_dir = "data/synth";
  std::string synth_format = "ml100k";
  synth->add_option("--out", synth_dir, "output directory");
  synth->add_option("--format", synth_format, "ml100k or ml1m")
      ->check(CLI::IsMember({"ml100k", "ml1m"}));
  synth->add_option("--users", synth_spec.users, "user count");
  synth->add_option("--items", synth_spec.items, "item count");
  synth->add_option("--ratings", synth_spec.rating_count, "rating count");
  synth->add_option("--females", synth_spec.female_users, "gender-minority users");
  synth->add_option("--under18", synth_spec.under18_users, "age-minority users");
  synth->add_option("--noise", synth_spec.noise_sigma, "rating noise sigma");
  synth->add_option("--seed", synth_spec.rng_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_flags, manifest_out);
    if (*train) return cmd_train(train_flags);
    if (*bound) {
      if (use_theorem1 == use_lemma1) {
        std::cerr << "bound: pass exactly one of --theorem1 / --lemma1\n";
        return 1;
      }
      return cmd_bound(use_theorem1, bound_n, bound_tau, bound_eps, range_lo, range_hi,
                       bound_sample, bound_clusters, bound_out);
    }
    if (*mc) return cmd_mc(mc_n, mc_k, mc_tau, mc_trials, mc_dev, mc_seed, mc_out);
    if (*elbow) return cmd_elbow(elbow_input, elbow_kmin, elbow_kmax, elbow_seed, elbow_out);
    if (*plan) return cmd_run_plan(plan_path, plan_out);
    if (*synth) {
      rsfair::write_synthetic_movielens(
          synth_dir, synth_spec, rsfair::movielens_format_from_string(synth_format));
      std::cout << "wrote " << synth_format << " corpus into " << synth_dir << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const rsfair::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
