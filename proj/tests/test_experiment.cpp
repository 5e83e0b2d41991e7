#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rsfair/experiment.hpp"
#include "rsfair/synthetic.hpp"

using namespace rsfair;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rsfair_plan_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path tiny_dataset_dir() {
  static const fs::path dir = [] {
    SyntheticSpec spec;
    spec.users = 40;
    spec.items = 50;
    spec.rating_count = 1600;
    spec.female_users = 12;
    spec.under18_users = 5;
    spec.min_ratings_per_user = 10;
    spec.max_ratings_per_user = 70;
    spec.rng_seed = 77;
    const fs::path d = fresh_dir("data");
    write_synthetic_movielens(d, spec);
    return d;
  }();
  return dir;
}

std::string plan_json(const fs::path& data_dir, const fs::path& out_dir,
                      const std::string& runs, std::size_t repetitions) {
  std::ostringstream os;
  os << "{\n"
     << "  \"dataset\": {\"format\": \"ml100k\", \"dir\": \"" << data_dir.string()
     << "\", \"train_frac\": 0.8},\n"
     << "  \"repetitions\": " << repetitions << ",\n"
     << "  \"base_seed\": 11,\n"
     << "  \"output_dir\": \"" << out_dir.string() << "\",\n"
     << "  \"hyperparams\": {\"k\": 4, \"rounds\": 3, \"gamma\": 0.05, \"workers\": 1},\n"
     << "  \"runs\": [" << runs << "]\n"
     << "}\n";
  return os.str();
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("single run, single repetition") {
  const auto out = fresh_dir("single");
  const auto plan_path = out / "plan.json";
  {
    std::ofstream f(plan_path);
    f << plan_json(tiny_dataset_dir(), out,
                   R"({"name": "base", "mode": "rs-fedrec",
                       "hyperparams": {"tau": 0.5}})",
                   1);
  }
  const auto plan = load_plan(plan_path);
  CHECK(plan.runs.size() == 1);
  CHECK(plan.runs[0].hp.tau == 0.5);
  CHECK(plan.runs[0].hp.rounds == 3);  // inherited default

  const auto result = run_plan(plan);
  REQUIRE(result.runs.size() == 1);
  CHECK(result.runs[0].failures.empty());
  CHECK(result.runs[0].trace_files.size() == 1);
  CHECK(fs::exists(out / result.runs[0].trace_files[0]));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "ldap_vs_round.csv"));
  CHECK(fs::exists(out / "ldap_vs_rmse.csv"));

  std::ifstream sj(out / "summary.json");
  const auto summary = nlohmann::json::parse(sj);
  CHECK(summary["runs"].size() == 1);
  CHECK(summary["runs"][0]["final_rmse"].contains("mean"));
  CHECK(summary["runs"][0]["wall_clock_reduction"].is_null());
}

TEST_CASE("five algorithm variants produce five complete series") {
  const auto out = fresh_dir("variants");
  const auto plan_path = out / "plan.json";
  {
    std::ofstream f(plan_path);
    f << plan_json(
        tiny_dataset_dir(), out,
        R"({"name": "mf",          "mode": "mf-central", "attribute": "age"},
           {"name": "fedrec",      "mode": "fedrec",     "attribute": "age"},
           {"name": "rs-fedrec",   "mode": "rs-fedrec",  "attribute": "age", "baseline": "fedrec"},
           {"name": "fair20",      "mode": "rs-fairfrs", "attribute": "age", "seed_user_frac": 0.2},
           {"name": "fair50",      "mode": "rs-fairfrs", "attribute": "age", "seed_user_frac": 0.5})",
        2);
  }
  const auto plan = load_plan(plan_path);
  const auto result = run_plan(plan);
  REQUIRE(result.runs.size() == 5);
  for (const auto& rr : result.runs) CHECK(rr.failures.empty());

  // ldap_vs_round has 5 series x 3 rounds
  std::ifstream lr(out / "ldap_vs_round.csv");
  std::string line;
  std::getline(lr, line);  // header
  std::map<std::string, std::size_t> rows;
  while (std::getline(lr, line)) ++rows[line.substr(0, line.find(','))];
  CHECK(rows.size() == 5);
  for (const auto& [run, count] : rows) CHECK(count == 3);

  // comm reduction is only populated where a baseline was declared
  std::ifstream sj(out / "summary.json");
  const auto summary = nlohmann::json::parse(sj);
  for (const auto& rj : summary["runs"]) {
    if (rj["name"] == "rs-fedrec")
      CHECK(rj["comm_reduction_vs_baseline"]["mean"].get<double>() > 0.0);
    else
      CHECK(rj["comm_reduction_vs_baseline"].is_null());
  }
}

TEST_CASE("summary statistics are independent of run order") {
  const auto out_a = fresh_dir("order_a");
  const auto out_b = fresh_dir("order_b");
  const std::string run1 = R"({"name": "r1", "mode": "rs-fedrec", "hyperparams": {"tau": 0.4}})";
  const std::string run2 = R"({"name": "r2", "mode": "fedrec"})";
  {
    std::ofstream f(out_a / "plan.json");
    f << plan_json(tiny_dataset_dir(), out_a, run1 + "," + run2, 2);
  }
  {
    std::ofstream f(out_b / "plan.json");
    f << plan_json(tiny_dataset_dir(), out_b, run2 + "," + run1, 2);
  }
  const auto ra = run_plan(load_plan(out_a / "plan.json"));
  const auto rb = run_plan(load_plan(out_b / "plan.json"));
  auto find = [](const PlanResult& r, const std::string& name) {
    for (const auto& rr : r.runs)
      if (rr.name == name) return rr;
    throw std::runtime_error("missing run");
  };
  for (const std::string name : {"r1", "r2"}) {
    CHECK(find(ra, name).final_rmse_mean == find(rb, name).final_rmse_mean);
    CHECK(find(ra, name).final_ldap_abs_mean == find(rb, name).final_ldap_abs_mean);
  }
}

TEST_CASE("a failing run is recorded and the rest continue") {
  const auto out = fresh_dir("failure");
  {
    std::ofstream f(out / "plan.json");
    // rs-fairfrs with no seed users cannot build seed data
    f << plan_json(tiny_dataset_dir(), out,
                   R"({"name": "broken", "mode": "rs-fairfrs", "seed_user_frac": 0.0},
                      {"name": "good",   "mode": "fedrec"})",
                   1);
  }
  const auto result = run_plan(load_plan(out / "plan.json"));
  REQUIRE(result.runs.size() == 2);
  CHECK(result.runs[0].failures.size() == 1);
  CHECK(result.runs[1].failures.empty());
}

}  // TEST_SUITE
