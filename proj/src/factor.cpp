#include "rsfair/factor.hpp"

#include <stdexcept>

#include "rsfair/rng.hpp"

namespace rsfair {

void Hyperparams::validate() const {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (lambda_r < 0 || lambda_f < 0 || eta < 0 || gamma < 0 || rho < 0)
    throw std::invalid_argument("hyperparameters must be nonnegative");
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("tau must be in (0, 1]");
  if (!(gamma_decay > 0.0 && gamma_decay <= 1.0))
    throw std::invalid_argument("gamma_decay must be in (0, 1]");
}

double learning_rate(const Hyperparams& hp, std::size_t round) {
  double g = hp.gamma;
  for (std::size_t t = 1; t < round; ++t) g *= hp.gamma_decay;
  return g;
}

double predict(std::span<const double> user_vec, std::span<const double> item_vec) {
  if (user_vec.size() != item_vec.size())
    throw std::invalid_argument("predict: vector lengths differ");
  return dot(user_vec, item_vec);
}

double mf_loss(const FactorModel& model, const std::vector<ObservedRating>& observed,
               double lambda_r) {
  double loss = 0.0;
  for (const auto& r : observed) {
    const auto u = model.user_vectors.row(r.user_id);
    const auto v = model.item_vectors.row(r.item_id);
    const double e = r.value - dot(u, v);
    loss += e * e + lambda_r * (squared_norm(v) + squared_norm(u));
  }
  return loss;
}

void mf_loss_gradient(const FactorModel& model,
                      const std::vector<ObservedRating>& observed, double lambda_r,
                      Matrix* user_grads, Matrix* item_grads) {
  *user_grads = Matrix(model.user_vectors.rows(), model.k);
  *item_grads = Matrix(model.item_vectors.rows(), model.k);
  for (const auto& r : observed) {
    const auto u = model.user_vectors.row(r.user_id);
    const auto v = model.item_vectors.row(r.item_id);
    const double e = dot(u, v) - r.value;
    auto gu = user_grads->row(r.user_id);
    auto gv = item_grads->row(r.item_id);
    for (std::size_t d = 0; d < model.k; ++d) {
      gu[d] += 2.0 * (e * v[d] + lambda_r * u[d]);
      gv[d] += 2.0 * (e * u[d] + lambda_r * v[d]);
    }
  }
}

void user_gradient(std::span<const double> user_vec,
                   const std::vector<RatedItem>& items, const Matrix& item_vectors,
                   double lambda_r, std::span<double> out) {
  if (items.empty())
    throw std::invalid_argument("user_gradient: empty item set");
  const std::size_t k = user_vec.size();
  for (std::size_t d = 0; d < k; ++d) out[d] = 0.0;
  for (const auto& it : items) {
    const auto v = item_vectors.row(it.item_id);
    const double e = dot(user_vec, v) - it.rating;
    for (std::size_t d = 0; d < k; ++d) out[d] += e * v[d] + lambda_r * user_vec[d];
  }
  for (std::size_t d = 0; d < k; ++d) out[d] /= static_cast<double>(items.size());
}

void item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                   double target, double lambda_r, std::span<double> out) {
  const double e = dot(user_vec, item_vec) - target;
  for (std::size_t d = 0; d < user_vec.size(); ++d)
    out[d] = e * user_vec[d] + lambda_r * item_vec[d];
}

void item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                   double rating, bool observed, double virtual_rating,
                   double lambda_r, std::span<double> out) {
  item_gradient(user_vec, item_vec, observed ? rating : virtual_rating, lambda_r, out);
}

void fo_item_gradient(std::span<const double> user_vec, std::span<const double> item_vec,
                      double target, std::span<const double> fair_item_vec, double eta,
                      double lambda_r, std::span<double> out) {
  item_gradient(user_vec, item_vec, target, lambda_r, out);
  for (std::size_t d = 0; d < item_vec.size(); ++d)
    out[d] += 2.0 * eta * (item_vec[d] - fair_item_vec[d]);
}

ClientGradients fo_client_gradients(std::span<const double> user_vec,
                                    const std::vector<RatedItem>& items,
                                    const Matrix& item_vectors,
                                    const Matrix* fair_item_vectors, double eta,
                                    double lambda_r) {
  if (fair_item_vectors != nullptr && !fair_item_vectors->same_shape(item_vectors))
    throw std::invalid_argument("fo_client_gradients: fair item matrix shape mismatch");
  ClientGradients g;
  g.user_grad.resize(user_vec.size());
  user_gradient(user_vec, items, item_vectors, lambda_r, g.user_grad);
  g.item_grads.resize(items.size());
  const bool fair = fair_item_vectors != nullptr && eta != 0.0;
  for (std::size_t idx = 0; idx < items.size(); ++idx) {
    const auto& it = items[idx];
    auto& grad = g.item_grads[idx];
    grad.resize(user_vec.size());
    if (fair) {
      fo_item_gradient(user_vec, item_vectors.row(it.item_id), it.rating,
                       fair_item_vectors->row(it.item_id), eta, lambda_r, grad);
    } else {
      item_gradient(user_vec, item_vectors.row(it.item_id), it.rating, lambda_r, grad);
    }
  }
  return g;
}

FactorModel init_model(std::size_t n_users, std::size_t n_items, std::size_t k,
                       std::uint64_t rng_seed) {
  if (n_users == 0 || n_items == 0 || k == 0)
    throw std::invalid_argument("init_model: dimensions must be positive");
  FactorModel model;
  model.k = k;
  model.user_vectors = Matrix(n_users, k);
  model.item_vectors = Matrix(n_items, k);
  Rng rng(rng_seed);
  for (auto& x : model.user_vectors.data()) x = rng.normal(0.0, 0.01);
  for (auto& x : model.item_vectors.data()) x = rng.normal(0.0, 0.01);
  return model;
}

}  // namespace rsfair
