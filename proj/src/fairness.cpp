#include "rsfair/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace rsfair {

GroupPartition identify_groups(const RatingDataset& dataset, const std::string& attribute) {
  const auto counts = attribute_counts(dataset, attribute);
  if (counts.size() != 2)
    throw DataError("attribute '" + attribute + "' is not binary: " +
                    std::to_string(counts.size()) + " label(s)");
  auto it = counts.begin();
  const auto& [label_a, count_a] = *it;
  ++it;
  const auto& [label_b, count_b] = *it;

  GroupPartition p;
  p.attribute = attribute;
  p.tie = count_a == count_b;
  if (p.tie)
    std::cerr << "[warn] attribute '" << attribute
              << "': groups are the same size; degenerate parity, tie broken by label order\n";
  // smaller group is disadvantaged; on a tie the lexicographically smaller
  // label (label_a, std::map order) is taken as disadvantaged
  const bool a_disadvantaged = count_a <= count_b;
  p.disadvantaged_label = a_disadvantaged ? label_a : label_b;
  p.advantaged_label = a_disadvantaged ? label_b : label_a;
  p.disadvantaged_count = a_disadvantaged ? count_a : count_b;
  p.advantaged_count = a_disadvantaged ? count_b : count_a;
  p.in_disadvantaged.assign(dataset.n, 0);
  for (const auto& profile : dataset.profiles)
    if (profile.attributes.at(attribute) == p.disadvantaged_label)
      p.in_disadvantaged[profile.user_id] = 1;
  return p;
}

FairnessReport compute_ldap(const std::vector<UserPredictions>& predictions,
                            const GroupPartition& partition) {
  double sum_g = 0.0, sum_ng = 0.0;
  std::size_t users_g = 0, users_ng = 0;
  for (const auto& up : predictions) {
    if (up.pairs.empty()) continue;
    double user_loss = 0.0;
    for (const auto& [r_hat, r] : up.pairs) {
      const double e = r_hat - r;
      user_loss += e * e;
    }
    user_loss /= static_cast<double>(up.pairs.size());
    if (partition.in_disadvantaged[up.user_id]) {
      sum_g += user_loss;
      ++users_g;
    } else {
      sum_ng += user_loss;
      ++users_ng;
    }
  }
  if (users_g == 0 || users_ng == 0)
    throw std::invalid_argument("compute_ldap: a group has no evaluated users");
  FairnessReport r;
  r.group_g_loss = sum_g / static_cast<double>(users_g);
  r.group_ng_loss = sum_ng / static_cast<double>(users_ng);
  r.ldap = r.group_g_loss - r.group_ng_loss;
  r.ldap_abs = std::abs(r.ldap);
  return r;
}

SeedData build_seed_data(const Partition& partition, const GroupPartition& groups) {
  if (partition.server_seed.empty())
    throw std::invalid_argument("server seed is empty; increase --seed-user-frac");
  SeedData seed;
  std::vector<std::int64_t> row_of(partition.train.size(), -1);
  for (const std::uint32_t u : partition.seed_users) {
    row_of[u] = static_cast<std::int64_t>(seed.seed_users.size());
    seed.seed_users.push_back(u);
    seed.ratings_by_row.emplace_back();
    seed.row_in_disadvantaged.push_back(groups.in_disadvantaged[u]);
  }
  for (const auto& r : partition.server_seed)
    seed.ratings_by_row[static_cast<std::size_t>(row_of[r.user_id])].push_back(r);

  // drop zero-rating rows
  SeedData out;
  for (std::size_t s = 0; s < seed.seed_users.size(); ++s) {
    if (seed.ratings_by_row[s].empty()) continue;
    out.seed_users.push_back(seed.seed_users[s]);
    out.ratings_by_row.push_back(std::move(seed.ratings_by_row[s]));
    out.row_in_disadvantaged.push_back(seed.row_in_disadvantaged[s]);
  }
  for (const auto flag : out.row_in_disadvantaged)
    flag ? ++out.rows_g : ++out.rows_ng;
  if (out.rows_g == 0 || out.rows_ng == 0)
    throw std::invalid_argument(
        "a seed group has no users with ratings for attribute '" + groups.attribute +
        "'; increase --seed-user-frac");
  return out;
}

double seed_ldap(const SeedData& seed, const Matrix& fair_user_vectors,
                 const Matrix& item_vectors) {
  double sum_g = 0.0, sum_ng = 0.0;
  for (std::size_t s = 0; s < seed.seed_users.size(); ++s) {
    const auto& ratings = seed.ratings_by_row[s];
    double user_loss = 0.0;
    for (const auto& r : ratings) {
      const double e = dot(fair_user_vectors.row(s), item_vectors.row(r.item_id)) - r.value;
      user_loss += e * e;
    }
    user_loss /= static_cast<double>(ratings.size());
    seed.row_in_disadvantaged[s] ? sum_g += user_loss : sum_ng += user_loss;
  }
  return sum_g / static_cast<double>(seed.rows_g) -
         sum_ng / static_cast<double>(seed.rows_ng);
}

void seed_ldap_abs_gradient(const SeedData& seed, const Matrix& fair_user_vectors,
                            const Matrix& item_vectors, Matrix* user_grads,
                            Matrix* item_grads) {
  const std::size_t k = fair_user_vectors.cols();
  *user_grads = Matrix(fair_user_vectors.rows(), k);
  *item_grads = Matrix(item_vectors.rows(), k);
  const double value = seed_ldap(seed, fair_user_vectors, item_vectors);
  if (value == 0.0) return;  // subgradient 0 at the kink
  const double sign = value > 0.0 ? 1.0 : -1.0;
  for (std::size_t s = 0; s < seed.seed_users.size(); ++s) {
    const auto& ratings = seed.ratings_by_row[s];
    const double group_size = static_cast<double>(
        seed.row_in_disadvantaged[s] ? seed.rows_g : seed.rows_ng);
    const double sigma = seed.row_in_disadvantaged[s] ? 1.0 : -1.0;
    const double w = sign * sigma * 2.0 / (group_size * static_cast<double>(ratings.size()));
    const auto u = fair_user_vectors.row(s);
    auto gu = user_grads->row(s);
    for (const auto& r : ratings) {
      const auto v = item_vectors.row(r.item_id);
      const double e = dot(u, v) - r.value;
      auto gv = item_grads->row(r.item_id);
      for (std::size_t d = 0; d < k; ++d) {
        gu[d] += w * e * v[d];
        gv[d] += w * e * u[d];
      }
    }
  }
}

FairMfResult fairmf(const SeedData& seed, const Matrix& item_vectors,
                    Matrix fair_user_vectors, const Hyperparams& hp, double gamma) {
  if (fair_user_vectors.rows() != seed.seed_users.size() ||
      fair_user_vectors.cols() != hp.k)
    throw std::invalid_argument("fairmf: fair user matrix shape mismatch");
  FairMfResult result;
  result.fair_item_vectors = item_vectors;  // unrated rows pass through
  result.fair_user_vectors = std::move(fair_user_vectors);
  Matrix& U = result.fair_user_vectors;
  Matrix& V = result.fair_item_vectors;
  const std::size_t k = hp.k;

  for (std::size_t sweep = 0; sweep < hp.fairmf_sweeps; ++sweep) {
    // freeze the penalty sign and normalizers for this sweep
    double sweep_sign = 0.0;
    if (hp.lambda_f != 0.0) {
      const double value = seed_ldap(seed, U, V);
      sweep_sign = value > 0.0 ? 1.0 : (value < 0.0 ? -1.0 : 0.0);
    }
    for (std::size_t s = 0; s < seed.seed_users.size(); ++s) {
      const auto& ratings = seed.ratings_by_row[s];
      const double sigma = seed.row_in_disadvantaged[s] ? 1.0 : -1.0;
      const double group_size = static_cast<double>(
          seed.row_in_disadvantaged[s] ? seed.rows_g : seed.rows_ng);
      const double w = hp.lambda_f * sweep_sign * sigma * 2.0 /
                       (group_size * static_cast<double>(ratings.size()));
      auto u = U.row(s);
      for (const auto& r : ratings) {
        if (r.value == 0.0) continue;
        auto v = V.row(r.item_id);
        const double e = dot(u, v) - r.value;
        const double coeff = e * (1.0 + w);
        for (std::size_t d = 0; d < k; ++d) {
          const double gu = coeff * v[d] + hp.lambda_r * u[d];
          const double gv = coeff * u[d] + hp.lambda_r * v[d];
          u[d] -= gamma * gu;
          v[d] -= gamma * gv;
        }
      }
    }
  }
  return result;
}

}  // namespace rsfair
