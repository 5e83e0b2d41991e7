#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "rsfair/protocol.hpp"
#include "rsfair/rng.hpp"

using namespace rsfair;

namespace {

// Hand-built 5-user dataset: every user has 5 ratings so an 80:20 split gives
// 4 train + 1 test, and both attribute groups appear on both sides.
RatingDataset five_user_dataset() {
  RatingDataset ds;
  ds.n = 5;
  ds.m = 8;
  const std::vector<std::vector<std::pair<std::uint32_t, double>>> per_user{
      {{0, 4}, {1, 3}, {2, 5}, {3, 2}, {4, 4}},
      {{1, 2}, {2, 4}, {3, 3}, {5, 5}, {6, 1}},
      {{0, 5}, {2, 3}, {4, 4}, {6, 2}, {7, 4}},
      {{1, 4}, {3, 5}, {4, 2}, {5, 3}, {7, 5}},
      {{0, 3}, {2, 2}, {5, 4}, {6, 5}, {7, 3}},
  };
  for (std::uint32_t u = 0; u < 5; ++u)
    for (const auto& [i, v] : per_user[u]) ds.ratings.push_back({u, i, v});
  ds.profiles.resize(5);
  const char* genders[5] = {"M", "F", "M", "F", "M"};
  const char* ages[5] = {">=18", ">=18", "<18", ">=18", "<18"};
  for (std::uint32_t u = 0; u < 5; ++u) {
    ds.profiles[u].user_id = u;
    ds.profiles[u].attributes["gender"] = genders[u];
    ds.profiles[u].attributes["age"] = ages[u];
  }
  for (std::uint32_t u = 1; u <= 5; ++u) ds.original_user_id.push_back(u);
  for (std::uint32_t i = 1; i <= 8; ++i) ds.original_item_id.push_back(i);
  return ds;
}

// smallest split seed whose seed users and clients both span both groups of
// both attributes (needed by the fair modes and by per-group evaluation)
Partition fair_partition(const RatingDataset& ds, double seed_user_frac) {
  for (std::uint64_t seed = 1; seed < 200; ++seed) {
    const auto p = split(ds, 0.8, seed_user_frac, seed);
    if (p.seed_users.empty() || p.client_users.empty()) continue;
    bool ok = true;
    for (const std::string attr : {"gender", "age"}) {
      std::set<std::string> in_seed, in_clients;
      for (const auto u : p.seed_users) in_seed.insert(ds.profiles[u].attributes.at(attr));
      for (const auto u : p.client_users)
        in_clients.insert(ds.profiles[u].attributes.at(attr));
      if (in_seed.size() != 2 || in_clients.size() != 2) ok = false;
    }
    if (ok) return p;
  }
  throw std::runtime_error("no balanced split seed found");
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.k = 3;
  hp.gamma = 0.05;
  hp.lambda_r = 0.01;
  hp.rounds = 4;
  hp.predict_round = 3;
  hp.local_iters = 2;
  hp.workers = 1;
  return hp;
}

ClientState make_client(std::uint32_t user_id, const Partition& partition,
                        const Hyperparams& hp, std::uint64_t run_seed) {
  ClientState c;
  c.user_id = user_id;
  c.user_vec.resize(hp.k);
  Rng init(derive_seed(run_seed, Stream::init_client_vector, user_id));
  for (auto& x : c.user_vec) x = init.normal(0.0, 0.01);
  double sum = 0.0;
  for (const auto& r : partition.train[user_id]) {
    c.items.push_back({r.item_id, r.value, true});
    sum += r.value;
  }
  std::sort(c.items.begin(), c.items.end(),
            [](const RatedItem& a, const RatedItem& b) { return a.item_id < b.item_id; });
  c.observed_count = c.items.size();
  c.observed_mean = sum / static_cast<double>(c.items.size());
  c.virtual_seed = derive_seed(run_seed, Stream::virtual_items, user_id);
  return c;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("sample_clients basics") {
  const auto three = sample_clients(10, 0.3, 5);
  CHECK(three.size() == 3);
  std::set<std::uint32_t> distinct(three.begin(), three.end());
  CHECK(distinct.size() == 3);
  for (const auto id : three) CHECK(id < 10);

  const auto all = sample_clients(10, 1.0, 5);
  CHECK(all.size() == 10);
  CHECK(std::is_sorted(all.begin(), all.end()));

  CHECK(sample_clients(10, 0.3, 5) == sample_clients(10, 0.3, 5));
  CHECK(sample_clients(943, 0.35, 1).size() == 331);  // ceil(330.05)
  CHECK(sample_clients(10, 0.05, 1).size() == 1);     // at least one client
  CHECK_THROWS_AS(sample_clients(0, 0.5, 1), std::invalid_argument);
}

TEST_CASE("client_filling: user averaging assigns the observed mean") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  Matrix V(ds.m, hp.k, 0.1);

  ClientState c;
  c.user_id = 0;
  c.user_vec.assign(hp.k, 0.0);
  c.items = {{0, 4.0, true}, {1, 2.0, true}, {5, 0.0, false}, {6, 0.0, false}};
  c.observed_count = 2;
  c.observed_mean = 3.0;
  client_filling(c, V, FillingStrategy::user_averaging, hp, 0.05);
  CHECK(c.items[2].rating == 3.0);
  CHECK(c.items[3].rating == 3.0);

  ClientState empty;
  empty.user_id = 1;
  empty.user_vec.assign(hp.k, 0.0);
  CHECK_THROWS_AS(client_filling(empty, V, FillingStrategy::user_averaging, hp, 0.05),
                  std::invalid_argument);
}

TEST_CASE("client_filling: hybrid with zero local iters predicts with the current model") {
  Hyperparams hp = small_hp();
  hp.local_iters = 0;
  Rng rng(23);
  Matrix V(6, hp.k);
  for (auto& x : V.data()) x = rng.normal(0.0, 0.5);
  ClientState c;
  c.user_id = 0;
  c.user_vec = {0.4, -0.2, 1.0};
  c.items = {{0, 4.0, true}, {2, 0.0, false}, {5, 0.0, false}};
  c.observed_count = 1;
  c.observed_mean = 4.0;
  client_filling(c, V, FillingStrategy::hybrid_filling, hp, 0.05);
  CHECK(c.items[1].rating == dot(c.user_vec, V.row(2)));
  CHECK(c.items[2].rating == dot(c.user_vec, V.row(5)));
}

TEST_CASE("client_filling: hybrid on a locally converged model barely moves") {
  Hyperparams hp = small_hp();
  hp.local_iters = 3;
  hp.lambda_r = 0.0;
  Rng rng(29);
  Matrix V(6, hp.k);
  for (auto& x : V.data()) x = rng.normal(0.0, 0.6);
  ClientState c;
  c.user_id = 0;
  c.user_vec = {0.1, 0.1, 0.1};
  c.items = {{0, 3.5, true}, {1, 2.5, true}, {3, 0.0, false}};
  c.observed_count = 2;
  c.observed_mean = 3.0;
  // drive the local objective to stationarity first
  for (int step = 0; step < 4000; ++step) {
    std::vector<double> g(hp.k);
    user_gradient(c.user_vec, c.items, V, hp.lambda_r, g);
    for (std::size_t d = 0; d < hp.k; ++d) c.user_vec[d] -= 0.05 * g[d];
    // virtual target tracks the prediction at stationarity
    c.items[2].rating = dot(c.user_vec, V.row(3));
  }
  const double before = dot(c.user_vec, V.row(3));
  client_filling(c, V, FillingStrategy::hybrid_filling, hp, 0.05);
  CHECK(std::abs(c.items[2].rating - before) <= 0.01);
}

TEST_CASE("client_round: exact prediction uploads lambda_r * V_i") {
  Hyperparams hp = small_hp();
  hp.rho = 2.0;
  Matrix V(1, hp.k);  // single item in the universe
  V.at(0, 0) = 0.5;
  V.at(0, 1) = -0.25;
  V.at(0, 2) = 1.0;
  ClientState c;
  c.user_id = 0;
  c.user_vec = {2.0, 0.0, 0.0};  // prediction = 1.0
  c.items = {{0, 1.0, true}};
  c.observed_count = 1;
  c.observed_mean = 1.0;
  c.virtual_seed = 1;

  const auto upload = client_round(c, V, nullptr, hp, 1, 1);
  REQUIRE(upload.item_gradients.size() == 1);  // no unrated items to sample
  CHECK(upload.item_gradients[0].first == 0);
  for (std::size_t d = 0; d < hp.k; ++d)
    CHECK(upload.item_gradients[0].second[d] ==
          doctest::Approx(hp.lambda_r * V.at(0, d)).epsilon(1e-12));
}

TEST_CASE("client_round before predict_round uses the observed mean") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  Matrix V(ds.m, hp.k, 0.05);
  auto c = make_client(0, partition, hp, 42);
  client_round(c, V, nullptr, hp, 1, ds.m);
  for (std::size_t j = c.observed_count; j < c.items.size(); ++j)
    CHECK(c.items[j].rating == c.observed_mean);
}

TEST_CASE("client_round uploads match a scalar oracle of the item gradients") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  Rng rng(63);
  Matrix V(ds.m, hp.k);
  for (auto& x : V.data()) x = rng.normal(0.0, 0.3);

  for (std::uint32_t u = 0; u < ds.n; ++u) {
    auto c = make_client(u, partition, hp, 42);
    const auto before = c;  // state at which gradients are evaluated
    const auto upload = client_round(c, V, nullptr, hp, 1, ds.m);

    // round 1 < predict_round: targets are the observed mean for virtuals
    std::map<std::uint32_t, std::pair<double, bool>> target;
    for (std::size_t j = 0; j < before.items.size(); ++j)
      target[before.items[j].item_id] = {before.items[j].observed
                                             ? before.items[j].rating
                                             : before.observed_mean,
                                         before.items[j].observed};
    // plus the virtual items sampled inside client_round
    for (const auto& [item_id, grad] : upload.item_gradients)
      if (!target.count(item_id)) target[item_id] = {before.observed_mean, false};

    CHECK(upload.user_id == u);
    CHECK(upload.item_gradients.size() == target.size());
    for (const auto& [item_id, grad] : upload.item_gradients) {
      double pred = 0.0;
      for (std::size_t d = 0; d < hp.k; ++d) pred += before.user_vec[d] * V.at(item_id, d);
      const double e = pred - target.at(item_id).first;
      for (std::size_t d = 0; d < hp.k; ++d) {
        const double expected = e * before.user_vec[d] + hp.lambda_r * V.at(item_id, d);
        CHECK(grad[d] == doctest::Approx(expected).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("virtual item set: size rho|I_u| capped, disjoint from observed, fixed") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  Matrix V(ds.m, hp.k, 0.05);
  auto c = make_client(0, partition, hp, 42);
  const std::size_t observed = c.observed_count;  // 4 -> rho|I| = 8 capped to 4
  client_round(c, V, nullptr, hp, 1, ds.m);
  CHECK(c.items.size() == observed + std::min<std::size_t>(2 * observed, ds.m - observed));
  std::set<std::uint32_t> seen;
  for (const auto& it : c.items) CHECK(seen.insert(it.item_id).second);

  const auto snapshot = c.items;
  client_round(c, V, nullptr, hp, 2, ds.m);
  REQUIRE(c.items.size() == snapshot.size());
  for (std::size_t j = 0; j < snapshot.size(); ++j)
    CHECK(c.items[j].item_id == snapshot[j].item_id);
}

TEST_CASE("aggregate: singleton, symmetry, and a 50-upload oracle") {
  const std::size_t k = 4, m = 12;

  GradientUpload a;
  a.user_id = 0;
  a.item_gradients = {{3, {1.0, -2.0, 0.5, 0.0}}};
  const auto single = aggregate({&a}, m, k);
  for (std::size_t d = 0; d < k; ++d) CHECK(single.at(3, d) == a.item_gradients[0].second[d]);

  GradientUpload b = a;
  b.user_id = 1;
  for (auto& x : b.item_gradients[0].second) x = -x;
  const auto cancel = aggregate({&a, &b}, m, k);
  for (std::size_t d = 0; d < k; ++d) CHECK(cancel.at(3, d) == 0.0);

  // 50 random uploads vs a naive accumulate-then-divide oracle, exact
  Rng rng(7);
  std::vector<GradientUpload> uploads(50);
  for (std::uint32_t u = 0; u < 50; ++u) {
    uploads[u].user_id = u;
    const auto ids = Rng(derive_seed(7, Stream::virtual_items, u))
                         .sample_indices(m, 1 + u % 5);
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (const auto id : sorted) {
      std::vector<double> g(k);
      for (auto& x : g) x = rng.normal(0.0, 1.0);
      uploads[u].item_gradients.emplace_back(id, std::move(g));
    }
  }
  std::vector<const GradientUpload*> ptrs;
  for (const auto& up : uploads) ptrs.push_back(&up);
  std::vector<std::uint32_t> counts;
  const auto agg = aggregate(ptrs, m, k, &counts);

  Matrix sums(m, k);
  std::vector<std::uint32_t> naive_counts(m, 0);
  for (const auto& up : uploads)
    for (const auto& [id, g] : up.item_gradients) {
      for (std::size_t d = 0; d < k; ++d) sums.at(id, d) += g[d];
      ++naive_counts[id];
    }
  for (std::size_t i = 0; i < m; ++i) {
    CHECK(counts[i] == naive_counts[i]);
    for (std::size_t d = 0; d < k; ++d) {
      const double expected =
          naive_counts[i] == 0 ? 0.0 : sums.at(i, d) / naive_counts[i];
      CHECK(agg.at(i, d) == expected);  // bit-exact: same summation order
    }
  }
}

TEST_CASE("fedrec single round equals a hand-rolled sequential reference") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  hp.rounds = 1;
  const std::uint64_t seed = 77;

  const auto result = run_training(ds, partition, hp, RunMode::fedrec, seed);

  // ---- sequential scalar reference of one full round ----
  const std::size_t k = hp.k;
  Matrix V(ds.m, k);
  {
    Rng init(derive_seed(seed, Stream::init_item_vectors));
    for (auto& x : V.data()) x = init.normal(0.0, 0.01);
  }
  std::vector<ClientState> clients;
  for (std::uint32_t u = 0; u < ds.n; ++u) clients.push_back(make_client(u, partition, hp, seed));
  const double gamma = hp.gamma;

  Matrix sums(ds.m, k);
  std::vector<std::uint32_t> counts(ds.m, 0);
  for (auto& c : clients) {
    // virtual items: same per-client stream
    std::vector<std::uint32_t> candidates;
    std::set<std::uint32_t> has;
    for (std::size_t j = 0; j < c.observed_count; ++j) has.insert(c.items[j].item_id);
    for (std::uint32_t i = 0; i < ds.m; ++i)
      if (!has.count(i)) candidates.push_back(i);
    const auto want = std::min<std::size_t>(
        static_cast<std::size_t>(std::llround(hp.rho * double(c.observed_count))),
        candidates.size());
    Rng vr(c.virtual_seed);
    auto picks = vr.sample_indices(candidates.size(), want);
    std::sort(picks.begin(), picks.end());
    for (const auto p : picks) c.items.push_back({candidates[p], c.observed_mean, false});

    // user averaging (round 1 < predict_round), then the normalized user
    // gradient and the per-pair item gradients
    auto residual = [&](const RatedItem& it) {
      double pred = 0.0;
      for (std::size_t d = 0; d < k; ++d) pred += c.user_vec[d] * V.at(it.item_id, d);
      return pred - it.rating;
    };
    std::vector<double> ugrad(k, 0.0);
    for (const auto& it : c.items) {
      const double e = residual(it);
      for (std::size_t d = 0; d < k; ++d)
        ugrad[d] += e * V.at(it.item_id, d) + hp.lambda_r * c.user_vec[d];
    }
    for (std::size_t d = 0; d < k; ++d) ugrad[d] /= double(c.items.size());
    for (const auto& it : c.items) {
      const double e = residual(it);
      for (std::size_t d = 0; d < k; ++d)
        sums.at(it.item_id, d) += e * c.user_vec[d] + hp.lambda_r * V.at(it.item_id, d);
      ++counts[it.item_id];
    }
    for (std::size_t d = 0; d < k; ++d) c.user_vec[d] -= gamma * ugrad[d];
  }
  for (std::uint32_t i = 0; i < ds.m; ++i) {
    if (counts[i] == 0) continue;
    for (std::size_t d = 0; d < k; ++d)
      V.at(i, d) -= gamma * (sums.at(i, d) / counts[i]);
  }

  CHECK(result.server.item_vectors == V);
  for (const auto& c : clients) {
    const auto row = result.client_view.user_vectors.row(c.user_id);
    for (std::size_t d = 0; d < k; ++d) CHECK(row[d] == c.user_vec[d]);
  }
}

TEST_CASE("rs-fedrec at tau 1 bit-matches fedrec") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  hp.tau = 1.0;

  const auto a = run_training(ds, partition, hp, RunMode::fedrec, 5);
  const auto b = run_training(ds, partition, hp, RunMode::rs_fedrec, 5);
  CHECK(a.server.item_vectors == b.server.item_vectors);
  CHECK(a.client_view.user_vectors == b.client_view.user_vectors);
  REQUIRE(a.traces.size() == b.traces.size());
  for (std::size_t t = 0; t < a.traces.size(); ++t) {
    CHECK(a.traces[t].rmse_test == b.traces[t].rmse_test);
    CHECK(a.traces[t].params_uploaded == b.traces[t].params_uploaded);
    CHECK(a.traces[t].gamma == b.traces[t].gamma);
    for (const auto& [attr, gm] : a.traces[t].by_attribute) {
      const auto& other = b.traces[t].by_attribute.at(attr);
      CHECK(gm.rmse_g == other.rmse_g);
      CHECK(gm.rmse_ng == other.rmse_ng);
      CHECK(gm.ldap == other.ldap);
    }
  }
  // CSV bytes match once the mode token is removed
  auto strip_mode = [](std::string csv, const std::string& mode) {
    std::size_t pos;
    while ((pos = csv.find(mode)) != std::string::npos) csv.erase(pos, mode.size());
    return csv;
  };
  CHECK(strip_mode(trace_csv(a.traces, "gender"), "fedrec") ==
        strip_mode(trace_csv(b.traces, "gender"), "rs-fedrec"));
}

TEST_CASE("rs-fairfrs with eta 0 and lambda_f 0 collapses to the fedrec path") {
  const auto ds = five_user_dataset();
  const auto partition = fair_partition(ds, 0.4);
  Hyperparams hp = small_hp();
  hp.tau = 1.0;
  hp.eta = 0.0;
  hp.lambda_f = 0.0;

  const auto fair = run_training(ds, partition, hp, RunMode::rs_fairfrs, 5);
  const auto plain = run_training(ds, partition, hp, RunMode::rs_fedrec, 5);
  CHECK(fair.server.item_vectors == plain.server.item_vectors);
  CHECK(fair.client_view.user_vectors == plain.client_view.user_vectors);
  for (std::size_t t = 0; t < fair.traces.size(); ++t)
    CHECK(fair.traces[t].rmse_test == plain.traces[t].rmse_test);
}

TEST_CASE("trace bookkeeping: gamma schedule, upload accounting, determinism") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  hp.rounds = 5;

  const auto result = run_training(ds, partition, hp, RunMode::fedrec, 9);
  REQUIRE(result.traces.size() == 5);
  std::uint64_t expected_params = 0;
  for (std::uint32_t u = 0; u < ds.n; ++u) {
    const std::size_t observed = partition.train[u].size();
    const std::size_t virtuals = std::min<std::size_t>(
        static_cast<std::size_t>(std::llround(hp.rho * double(observed))),
        ds.m - observed);
    expected_params += (observed + virtuals) * hp.k;
  }
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(result.traces[t].gamma == learning_rate(hp, t + 1));
    CHECK(result.traces[t].clients_uploaded == ds.n);
    CHECK(result.traces[t].params_uploaded == expected_params);
    CHECK(result.traces[t].rmse_test >= 0.0);
  }

  // byte-identical traces across reruns and across worker counts
  const auto rerun = run_training(ds, partition, hp, RunMode::fedrec, 9);
  CHECK(trace_csv(result.traces, "gender") == trace_csv(rerun.traces, "gender"));
  Hyperparams hp8 = hp;
  hp8.workers = 8;
  const auto wide = run_training(ds, partition, hp8, RunMode::fedrec, 9);
  CHECK(trace_csv(result.traces, "gender") == trace_csv(wide.traces, "gender"));
  CHECK(result.server.item_vectors == wide.server.item_vectors);
}

TEST_CASE("upload payloads stay clean on a small fair run") {
  const auto ds = five_user_dataset();
  const auto partition = fair_partition(ds, 0.4);
  Hyperparams hp = small_hp();
  hp.eta = 0.3;
  hp.lambda_f = 0.5;

  std::vector<GradientUpload> captured;
  TrainingOptions opts;
  opts.upload_observer = [&](std::size_t, const GradientUpload& up) {
    captured.push_back(up);
  };
  const auto result = run_training(ds, partition, hp, RunMode::rs_fairfrs, 21, opts);
  REQUIRE(!captured.empty());
  for (const auto& up : captured) {
    const std::string wire = up.serialize();
    for (const char* token : {"\"M\"", "\"F\"", "<18", ">=18", "gender", "age", "rating"})
      CHECK(wire.find(token) == std::string::npos);
    // gradient values never equal the client's raw ratings
    std::set<double> ratings;
    for (const auto& r : partition.train[up.user_id]) ratings.insert(r.value);
    for (const auto& [item_id, grad] : up.item_gradients)
      for (const double x : grad) CHECK(ratings.count(x) == 0);
  }
  (void)result;
}

TEST_CASE("empty client population is an error") {
  const auto ds = five_user_dataset();
  Partition p;
  p.train.resize(ds.n);
  p.test.resize(ds.n);
  CHECK_THROWS_AS(run_training(ds, p, small_hp(), RunMode::fedrec, 1),
                  std::invalid_argument);
}

TEST_CASE("central baseline produces the same trace schema") {
  const auto ds = five_user_dataset();
  const auto partition = split(ds, 0.8, 0.0, 11);
  Hyperparams hp = small_hp();
  hp.rounds = 3;
  const auto result = run_training(ds, partition, hp, RunMode::mf_central, 4);
  REQUIRE(result.traces.size() == 3);
  CHECK(result.traces[0].mode == "mf-central");
  CHECK(result.traces[0].params_uploaded == 0);
  const auto rerun = run_central_mf(ds, partition, hp, 4);
  CHECK(trace_csv(result.traces, "age") == trace_csv(rerun.traces, "age"));
}

}  // TEST_SUITE
