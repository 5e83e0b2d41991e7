#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rsfair/dataset.hpp"
#include "rsfair/factor.hpp"
#include "rsfair/fairness.hpp"
#include "rsfair/metrics.hpp"

namespace rsfair {

enum class RunMode { fedrec, rs_fedrec, rs_fairfrs, mf_central };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

// One client's private state. The user vector, ratings, and group labels
// never leave the client; only item gradients are uploaded.
struct ClientState {
  std::uint32_t user_id = 0;
  std::vector<double> user_vec;      // k, private
  std::vector<RatedItem> items;      // observed block first, then virtual block
  std::size_t observed_count = 0;
  double observed_mean = 0.0;
  bool virtuals_sampled = false;
  std::uint64_t virtual_seed = 0;    // per-client stream for I'_u
  std::map<std::string, std::string> group_labels;  // local only
};

// Wire payload: user id plus one gradient vector per true-or-virtual item.
// Carries no ratings, no user vector, no group labels.
struct GradientUpload {
  std::uint32_t user_id = 0;
  std::vector<std::pair<std::uint32_t, std::vector<double>>> item_gradients;

  std::string serialize() const;  // compact JSON
};

struct ServerState {
  Matrix item_vectors;       // V, m x k
  Matrix fair_item_vectors;  // V_fair, m x k (fairness modes only)
  Matrix fair_user_vectors;  // U_fair, S x k (fairness modes only)
};

enum class FillingStrategy { user_averaging, hybrid_filling };

// Assigns virtual ratings for I'_u. user_averaging sets the client's
// observed-rating mean; hybrid_filling first runs local_iters user-vector
// steps at `gamma`, then sets predicted ratings.
void client_filling(ClientState& client, const Matrix& item_vectors,
                    FillingStrategy strategy, const Hyperparams& hp, double gamma);

// Samples I'_u (first call), fills virtual ratings (user averaging before
// predict_round, hybrid filling after), computes the local gradients, updates
// the user vector, and returns the upload. fair_item_vectors may be null
// (plain FedRec path).
GradientUpload client_round(ClientState& client, const Matrix& item_vectors,
                            const Matrix* fair_item_vectors, const Hyperparams& hp,
                            std::size_t round, std::uint32_t n_items);

// Per-item mean of uploaded gradients over the uploading clients that touched
// the item (ascending-user summation order); rows nobody touched stay zero.
Matrix aggregate(const std::vector<const GradientUpload*>& uploads, std::size_t n_items,
                 std::size_t k, std::vector<std::uint32_t>* uploader_counts = nullptr);

// ceil(tau * n) distinct ids from [0, n), uniform without replacement,
// returned ascending.
std::vector<std::uint32_t> sample_clients(std::size_t n, double tau,
                                          std::uint64_t rng_seed);

struct TrainingOptions {
  std::string attribute = "gender";  // attribute FairMF optimizes
  // Called once per sampled upload each round, ascending user id.
  std::function<void(std::size_t round, const GradientUpload&)> upload_observer;
  std::size_t checkpoint_every = 0;  // rounds; 0 = off
  std::filesystem::path checkpoint_dir;
};

struct TrainingResult {
  FactorModel client_view;  // row u = final U_u for client users, zero rows otherwise
  ServerState server;
  std::vector<RoundTrace> traces;
  std::vector<std::uint32_t> population;  // user ids that acted as clients
};

// The full federated loop: per round, sample C^tau, refresh the fair model
// (rs_fairfrs only), train all clients in parallel, aggregate the sampled
// uploads, step the item vectors, decay gamma, and record a trace. Results
// are identical at any worker count.
TrainingResult run_training(const RatingDataset& dataset, const Partition& partition,
                            Hyperparams hp, RunMode mode, std::uint64_t rng_seed,
                            const TrainingOptions& opts = {});

// Centralized baseline: per-rating SGD sweeps over the pooled client train
// split, one sweep per round, same trace schema (no uploads).
TrainingResult run_central_mf(const RatingDataset& dataset, const Partition& partition,
                              Hyperparams hp, std::uint64_t rng_seed,
                              const TrainingOptions& opts = {});

}  // namespace rsfair
