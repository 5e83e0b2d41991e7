#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rsfair/matrix.hpp"

namespace rsfair {

// Latent factor model: one k-vector per user and per item.
struct FactorModel {
  Matrix user_vectors;  // n x k
  Matrix item_vectors;  // m x k
  std::size_t k = 0;
};

struct Hyperparams {
  std::size_t k = 20;           // latent dimension
  double lambda_r = 5e-3;       // L2 regularizer
  double lambda_f = 0.1;        // fairness penalizer (FairMF)
  double eta = 0.1;             // local fair-proximity weight
  double gamma = 0.6;           // initial learning rate
  double gamma_decay = 0.9;     // per-round multiplicative decay
  double rho = 2.0;             // virtual-item ratio
  double tau = 0.35;            // client sampling fraction
  std::size_t rounds = 20;      // communication rounds
  std::size_t fairmf_sweeps = 15;   // FairMF iterations per round
  double fairmf_gamma_scale = 0.05;  // server step = round gamma * this scale
  std::size_t local_iters = 5;      // local user-vector iterations (hybrid filling)
  std::size_t predict_round = 3;    // first round that uses hybrid filling
  bool train_sampled_only = false;  // skip local training for unsampled clients
  bool clamp_eval = true;           // clamp predictions into rating range at eval
  int workers = 0;                  // 0 = hardware default (capped at 8)

  void validate() const;  // throws std::invalid_argument
};

// Learning rate in effect at 1-based `round`: gamma * decay^(round-1),
// computed by iterated multiplication so every component sees bit-identical
// values.
double learning_rate(const Hyperparams& hp, std::size_t round);

// One item on a client: true rating when observed, current virtual rating
// otherwise.
struct RatedItem {
  std::uint32_t item_id = 0;
  double rating = 0.0;
  bool observed = false;
};

// r_hat = U_u . V_i
double predict(std::span<const double> user_vec, std::span<const double> item_vec);

// Regularized squared loss over the observed set, regularization summed
// inside the double sum (each observed pair contributes both norms).
struct ObservedRating {
  std::uint32_t user_id = 0;
  std::uint32_t item_id = 0;
  double value = 0.0;
};
double mf_loss(const FactorModel& model, const std::vector<ObservedRating>& observed,
               double lambda_r);

// Exact gradient of mf_loss with respect to every user and item vector.
void mf_loss_gradient(const FactorModel& model,
                      const std::vector<ObservedRating>& observed, double lambda_r,
                      Matrix* user_grads, Matrix* item_grads);

// Normalized user gradient over the client's true + virtual item set:
//   (sum_i [(U.V_i - target_i) V_i + lambda_r U]) / |items|
// Errors on an empty item set.
void user_gradient(std::span<const double> user_vec,
                   const std::vector<RatedItem>& items, const Matrix& item_vectors,
                   double lambda_r, std::span<double> out);

// Per-pair item gradient: (U.V - target) U + lambda_r V.
void item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                   double target, double lambda_r, std::span<double> out);

// Spec-shaped overload with explicit observation indicator.
void item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                   double rating, bool observed, double virtual_rating,
                   double lambda_r, std::span<double> out);

// Item gradient for the fairness-oriented local objective: the plain item
// gradient plus 2*eta*(V - V_fair). The proximity term has no user-vector
// dependence, so the user gradient is user_gradient unchanged.
void fo_item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                      double target, std::span<const double> fair_item_vec, double eta,
                      double lambda_r, std::span<double> out);

struct ClientGradients {
  std::vector<double> user_grad;                 // k
  std::vector<std::vector<double>> item_grads;   // aligned with the item list
};

// Gradients of the local objective L^MF + eta * ||V_fair - V_i||^2 for one
// client, with respect to the user vector and every touched item vector.
// With eta = 0 (or no fair vectors) this is the plain FedRec path.
ClientGradients fo_client_gradients(std::span<const double> user_vec,
                                    const std::vector<RatedItem>& items,
                                    const Matrix& item_vectors,
                                    const Matrix* fair_item_vectors, double eta,
                                    double lambda_r);

// Entries drawn i.i.d. from N(0, 0.01^2); deterministic under rng_seed.
FactorModel init_model(std::size_t n_users, std::size_t n_items, std::size_t k,
                       std::uint64_t rng_seed);

}  // namespace rsfair
