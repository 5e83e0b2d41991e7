#include "rsfair/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "rsfair/parallel.hpp"
#include "rsfair/rng.hpp"

namespace rsfair {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::fedrec: return "fedrec";
    case RunMode::rs_fedrec: return "rs-fedrec";
    case RunMode::rs_fairfrs: return "rs-fairfrs";
    case RunMode::mf_central: return "mf-central";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "fedrec") return RunMode::fedrec;
  if (s == "rs-fedrec" || s == "rs_fedrec") return RunMode::rs_fedrec;
  if (s == "rs-fairfrs" || s == "rs_fairfrs") return RunMode::rs_fairfrs;
  if (s == "mf-central" || s == "mf_central") return RunMode::mf_central;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string GradientUpload::serialize() const {
  std::string out = "{\"user_id\":";
  out += std::to_string(user_id);
  out += ",\"items\":[";
  bool first_item = true;
  for (const auto& [item_id, grad] : item_gradients) {
    if (!first_item) out += ',';
    first_item = false;
    out += "{\"i\":";
    out += std::to_string(item_id);
    out += ",\"g\":[";
    for (std::size_t d = 0; d < grad.size(); ++d) {
      if (d) out += ',';
      out += format_double(grad[d]);
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

std::vector<std::uint32_t> sample_clients(std::size_t n, double tau,
                                          std::uint64_t rng_seed) {
  if (n == 0) throw std::invalid_argument("sample_clients: empty client population");
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("sample_clients: tau must be in (0, 1]");
  // mathematical ceil(tau*n); the tiny guard keeps exact-integer products
  // from spilling over by one ulp
  auto count = static_cast<std::size_t>(
      std::ceil(tau * static_cast<double>(n) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);
  Rng rng(rng_seed);
  auto ids = rng.sample_indices(n, count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

void sample_virtual_items(ClientState& client, const Hyperparams& hp,
                          std::uint32_t n_items) {
  if (client.virtuals_sampled) return;
  client.virtuals_sampled = true;
  const std::size_t observed = client.observed_count;
  std::vector<std::uint8_t> has(n_items, 0);
  for (std::size_t j = 0; j < observed; ++j) has[client.items[j].item_id] = 1;
  std::vector<std::uint32_t> candidates;
  candidates.reserve(n_items - observed);
  for (std::uint32_t i = 0; i < n_items; ++i)
    if (!has[i]) candidates.push_back(i);
  auto want = static_cast<std::size_t>(
      std::llround(hp.rho * static_cast<double>(observed)));
  want = std::min(want, candidates.size());
  if (want == 0) return;
  Rng rng(client.virtual_seed);
  auto picks = rng.sample_indices(candidates.size(), want);
  std::sort(picks.begin(), picks.end());
  for (const auto p : picks)
    client.items.push_back({candidates[p], client.observed_mean, false});
}

void local_user_steps(ClientState& client, const Matrix& item_vectors,
                      const Hyperparams& hp, double gamma, std::size_t steps) {
  std::vector<double> grad(hp.k);
  for (std::size_t t = 0; t < steps; ++t) {
    user_gradient(client.user_vec, client.items, item_vectors, hp.lambda_r, grad);
    for (std::size_t d = 0; d < hp.k; ++d) client.user_vec[d] -= gamma * grad[d];
  }
}

}  // namespace

void client_filling(ClientState& client, const Matrix& item_vectors,
                    FillingStrategy strategy, const Hyperparams& hp, double gamma) {
  if (client.observed_count == 0)
    throw std::invalid_argument("client_filling: client has no observed ratings");
  if (strategy == FillingStrategy::user_averaging) {
    for (std::size_t j = client.observed_count; j < client.items.size(); ++j)
      client.items[j].rating = client.observed_mean;
    return;
  }
  // hybrid filling: local user-vector refinement first, then predicted ratings
  local_user_steps(client, item_vectors, hp, gamma, hp.local_iters);
  for (std::size_t j = client.observed_count; j < client.items.size(); ++j)
    client.items[j].rating =
        dot(client.user_vec, item_vectors.row(client.items[j].item_id));
}

GradientUpload client_round(ClientState& client, const Matrix& item_vectors,
                            const Matrix* fair_item_vectors, const Hyperparams& hp,
                            std::size_t round, std::uint32_t n_items) {
  sample_virtual_items(client, hp, n_items);
  const double gamma = learning_rate(hp, round);
  const FillingStrategy strategy = round < hp.predict_round
                                       ? FillingStrategy::user_averaging
                                       : FillingStrategy::hybrid_filling;
  client_filling(client, item_vectors, strategy, hp, gamma);

  ClientGradients grads = fo_client_gradients(client.user_vec, client.items,
                                              item_vectors, fair_item_vectors,
                                              hp.eta, hp.lambda_r);
  GradientUpload upload;
  upload.user_id = client.user_id;
  upload.item_gradients.reserve(client.items.size());
  for (std::size_t j = 0; j < client.items.size(); ++j)
    upload.item_gradients.emplace_back(client.items[j].item_id,
                                       std::move(grads.item_grads[j]));
  std::sort(upload.item_gradients.begin(), upload.item_gradients.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t d = 0; d < hp.k; ++d)
    client.user_vec[d] -= gamma * grads.user_grad[d];
  return upload;
}

Matrix aggregate(const std::vector<const GradientUpload*>& uploads, std::size_t n_items,
                 std::size_t k, std::vector<std::uint32_t>* uploader_counts) {
  Matrix sums(n_items, k);
  std::vector<std::uint32_t> counts(n_items, 0);
  // ascending user id fixes the floating-point summation order
  std::vector<const GradientUpload*> ordered = uploads;
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return a->user_id < b->user_id;
  });
  for (const auto* up : ordered) {
    for (const auto& [item_id, grad] : up->item_gradients) {
      auto row = sums.row(item_id);
      for (std::size_t d = 0; d < k; ++d) row[d] += grad[d];
      ++counts[item_id];
    }
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    if (counts[i] == 0) continue;
    auto row = sums.row(i);
    for (std::size_t d = 0; d < k; ++d) row[d] /= static_cast<double>(counts[i]);
  }
  if (uploader_counts != nullptr) *uploader_counts = std::move(counts);
  return sums;
}

namespace {

struct Population {
  std::vector<ClientState> clients;
  std::vector<std::uint32_t> user_ids;  // ascending
};

Population build_population(const RatingDataset& dataset, const Partition& partition,
                            const Hyperparams& hp, std::uint64_t rng_seed) {
  Population pop;
  std::size_t dropped = 0;
  for (const std::uint32_t u : partition.client_users) {
    const auto& train = partition.train[u];
    if (train.empty()) {
      ++dropped;
      continue;
    }
    ClientState c;
    c.user_id = u;
    c.user_vec.resize(hp.k);
    Rng init(derive_seed(rng_seed, Stream::init_client_vector, u));
    for (auto& x : c.user_vec) x = init.normal(0.0, 0.01);
    c.items.reserve(train.size());
    double sum = 0.0;
    for (const auto& r : train) {
      c.items.push_back({r.item_id, r.value, true});
      sum += r.value;
    }
    std::sort(c.items.begin(), c.items.end(),
              [](const RatedItem& a, const RatedItem& b) { return a.item_id < b.item_id; });
    c.observed_count = c.items.size();
    c.observed_mean = sum / static_cast<double>(c.items.size());
    c.virtual_seed = derive_seed(rng_seed, Stream::virtual_items, u);
    c.group_labels = dataset.profiles[u].attributes;
    pop.clients.push_back(std::move(c));
    pop.user_ids.push_back(u);
  }
  if (dropped > 0)
    std::cerr << "[warn] dropped " << dropped << " client(s) with no train ratings\n";
  if (pop.clients.empty())
    throw std::invalid_argument("run_training: empty client population");
  return pop;
}

std::vector<UserPredictions> evaluate_clients(const Population& pop,
                                              const Partition& partition,
                                              const Matrix& item_vectors,
                                              const Hyperparams& hp) {
  std::vector<UserPredictions> preds(pop.clients.size());
  parallel_for(pop.clients.size(), hp.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto& client = pop.clients[c];
      auto& up = preds[c];
      up.user_id = client.user_id;
      const auto& test = partition.test[client.user_id];
      up.pairs.reserve(test.size());
      for (const auto& r : test) {
        double r_hat = dot(client.user_vec, item_vectors.row(r.item_id));
        if (hp.clamp_eval) r_hat = std::clamp(r_hat, 1.0, 5.0);
        up.pairs.emplace_back(r_hat, r.value);
      }
    }
  });
  return preds;
}

RoundTrace make_trace(std::size_t round, const std::string& mode, double tau,
                      const std::vector<UserPredictions>& preds,
                      const std::map<std::string, GroupPartition>& groups) {
  RoundTrace t;
  t.round = round;
  t.mode = mode;
  t.tau = tau;
  std::vector<std::pair<double, double>> all;
  for (const auto& up : preds) all.insert(all.end(), up.pairs.begin(), up.pairs.end());
  t.rmse_test = rmse(all, /*clamp=*/false);
  for (const auto& [attr, partition] : groups) {
    GroupMetrics gm;
    const GroupRmse gr = group_rmse(preds, partition, /*clamp=*/false);
    gm.rmse_g = gr.rmse_g;
    gm.rmse_ng = gr.rmse_ng;
    const FairnessReport fr = compute_ldap(preds, partition);
    gm.ldap = fr.ldap;
    gm.ldap_abs = fr.ldap_abs;
    t.by_attribute[attr] = gm;
  }
  return t;
}

std::map<std::string, GroupPartition> all_group_partitions(const RatingDataset& dataset) {
  std::map<std::string, GroupPartition> groups;
  for (const std::string attr : {"gender", "age"})
    groups[attr] = identify_groups(dataset, attr);
  return groups;
}

}  // namespace

TrainingResult run_training(const RatingDataset& dataset, const Partition& partition,
                            Hyperparams hp, RunMode mode, std::uint64_t rng_seed,
                            const TrainingOptions& opts) {
  if (mode == RunMode::mf_central)
    return run_central_mf(dataset, partition, hp, rng_seed, opts);
  if (mode == RunMode::fedrec) hp.tau = 1.0;  // full participation by definition
  hp.validate();
  const bool fair = mode == RunMode::rs_fairfrs;

  Population pop = build_population(dataset, partition, hp, rng_seed);
  const auto groups = all_group_partitions(dataset);

  TrainingResult result;
  result.population = pop.user_ids;
  result.server.item_vectors = Matrix(dataset.m, hp.k);
  {
    Rng init(derive_seed(rng_seed, Stream::init_item_vectors));
    for (auto& x : result.server.item_vectors.data()) x = init.normal(0.0, 0.01);
  }

  SeedData seed;
  if (fair) {
    seed = build_seed_data(partition, groups.at(opts.attribute));
    result.server.fair_user_vectors = Matrix(seed.seed_users.size(), hp.k);
    Rng init(derive_seed(rng_seed, Stream::init_fair_user_vectors));
    for (auto& x : result.server.fair_user_vectors.data()) x = init.normal(0.0, 0.01);
  }

  std::vector<GradientUpload> uploads(pop.clients.size());
  std::vector<std::uint8_t> sampled(pop.clients.size());

  for (std::size_t round = 1; round <= hp.rounds; ++round) {
    const auto started = std::chrono::steady_clock::now();
    const double gamma = learning_rate(hp, round);

    const auto chosen = sample_clients(pop.clients.size(), hp.tau,
                                       derive_seed(rng_seed, Stream::client_sampling, round));
    std::fill(sampled.begin(), sampled.end(), 0);
    for (const auto c : chosen) sampled[c] = 1;

    if (fair) {
      // per-rating server updates are stable at a fraction of the round's
      // mean-gradient learning rate
      FairMfResult fm = fairmf(seed, result.server.item_vectors,
                               std::move(result.server.fair_user_vectors), hp,
                               gamma * hp.fairmf_gamma_scale);
      result.server.fair_user_vectors = std::move(fm.fair_user_vectors);
      result.server.fair_item_vectors = std::move(fm.fair_item_vectors);
    }
    const Matrix* fair_items = fair ? &result.server.fair_item_vectors : nullptr;

    const Matrix& V = result.server.item_vectors;
    parallel_for(pop.clients.size(), hp.workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        ClientState& client = pop.clients[c];
        if (hp.train_sampled_only && !sampled[c]) continue;
        sample_virtual_items(client, hp, dataset.m);
        const FillingStrategy strategy = round < hp.predict_round
                                             ? FillingStrategy::user_averaging
                                             : FillingStrategy::hybrid_filling;
        client_filling(client, V, strategy, hp, gamma);
        std::vector<double> user_grad(hp.k);
        user_gradient(client.user_vec, client.items, V, hp.lambda_r, user_grad);
        if (sampled[c]) {
          GradientUpload& up = uploads[c];
          up.user_id = client.user_id;
          up.item_gradients.clear();
          up.item_gradients.reserve(client.items.size());
          std::vector<double> grad(hp.k);
          for (const auto& it : client.items) {
            if (fair_items != nullptr && hp.eta != 0.0) {
              fo_item_gradient(client.user_vec, V.row(it.item_id), it.rating,
                               fair_items->row(it.item_id), hp.eta, hp.lambda_r, grad);
            } else {
              item_gradient(client.user_vec, V.row(it.item_id), it.rating,
                            hp.lambda_r, grad);
            }
            up.item_gradients.emplace_back(it.item_id, grad);
          }
        }
        for (std::size_t d = 0; d < hp.k; ++d)
          client.user_vec[d] -= gamma * user_grad[d];
      }
    });

    std::vector<const GradientUpload*> round_uploads;
    round_uploads.reserve(chosen.size());
    std::uint64_t params = 0;
    for (const auto c : chosen) {  // ascending population index == ascending user id
      round_uploads.push_back(&uploads[c]);
      params += static_cast<std::uint64_t>(uploads[c].item_gradients.size()) * hp.k;
      if (opts.upload_observer) opts.upload_observer(round, uploads[c]);
    }
    const Matrix agg = aggregate(round_uploads, dataset.m, hp.k);
    for (std::size_t i = 0; i < dataset.m; ++i) {
      auto row = result.server.item_vectors.row(i);
      const auto g = agg.row(i);
      for (std::size_t d = 0; d < hp.k; ++d) row[d] -= gamma * g[d];
    }

    const auto preds = evaluate_clients(pop, partition, result.server.item_vectors, hp);
    RoundTrace trace = make_trace(round, to_string(mode), hp.tau, preds, groups);
    trace.params_uploaded = params;
    trace.clients_uploaded = chosen.size();
    trace.gamma = gamma;
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.traces.push_back(std::move(trace));

    if (opts.checkpoint_every != 0 && round % opts.checkpoint_every == 0) {
      std::filesystem::create_directories(opts.checkpoint_dir);
      save_matrix(result.server.item_vectors,
                  opts.checkpoint_dir / ("V_round" + std::to_string(round) + ".mat"));
      if (fair)
        save_matrix(result.server.fair_item_vectors,
                    opts.checkpoint_dir / ("Vfair_round" + std::to_string(round) + ".mat"));
    }
  }

  result.client_view.k = hp.k;
  result.client_view.user_vectors = Matrix(dataset.n, hp.k);
  result.client_view.item_vectors = result.server.item_vectors;
  for (const auto& client : pop.clients) {
    auto row = result.client_view.user_vectors.row(client.user_id);
    for (std::size_t d = 0; d < hp.k; ++d) row[d] = client.user_vec[d];
  }
  return result;
}

TrainingResult run_central_mf(const RatingDataset& dataset, const Partition& partition,
                              Hyperparams hp, std::uint64_t rng_seed,
                              const TrainingOptions& opts) {
  (void)opts;
  hp.tau = 1.0;
  hp.validate();
  const auto groups = all_group_partitions(dataset);

  FactorModel model = init_model(dataset.n, dataset.m, hp.k,
                                 derive_seed(rng_seed, Stream::init_item_vectors));
  std::vector<Rating> pooled;
  for (const std::uint32_t u : partition.client_users)
    pooled.insert(pooled.end(), partition.train[u].begin(), partition.train[u].end());
  if (pooled.empty()) throw std::invalid_argument("run_central_mf: no train ratings");

  TrainingResult result;
  result.population = partition.client_users;
  std::vector<std::uint32_t> order(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) order[i] = static_cast<std::uint32_t>(i);

  for (std::size_t round = 1; round <= hp.rounds; ++round) {
    const auto started = std::chrono::steady_clock::now();
    const double gamma = learning_rate(hp, round);
    Rng rng(derive_seed(rng_seed, Stream::central_sweep, round));
    rng.shuffle(order);
    for (const auto idx : order) {
      const Rating& r = pooled[idx];
      auto u = model.user_vectors.row(r.user_id);
      auto v = model.item_vectors.row(r.item_id);
      const double e = dot(u, v) - r.value;
      for (std::size_t d = 0; d < hp.k; ++d) {
        const double gu = e * v[d] + hp.lambda_r * u[d];
        const double gv = e * u[d] + hp.lambda_r * v[d];
        u[d] -= gamma * gu;
        v[d] -= gamma * gv;
      }
    }

    // evaluate on the client test split with the pooled model
    std::vector<UserPredictions> preds;
    preds.reserve(partition.client_users.size());
    for (const std::uint32_t user : partition.client_users) {
      UserPredictions up;
      up.user_id = user;
      for (const auto& r : partition.test[user]) {
        double r_hat = dot(model.user_vectors.row(user), model.item_vectors.row(r.item_id));
        if (hp.clamp_eval) r_hat = std::clamp(r_hat, 1.0, 5.0);
        up.pairs.emplace_back(r_hat, r.value);
      }
      preds.push_back(std::move(up));
    }
    RoundTrace trace = make_trace(round, to_string(RunMode::mf_central), 1.0, preds, groups);
    trace.params_uploaded = 0;
    trace.clients_uploaded = 0;
    trace.gamma = gamma;
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.traces.push_back(std::move(trace));
  }

  result.client_view = model;
  result.server.item_vectors = std::move(model.item_vectors);
  return result;
}

}  // namespace rsfair
