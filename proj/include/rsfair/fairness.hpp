#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsfair/dataset.hpp"
#include "rsfair/factor.hpp"
#include "rsfair/matrix.hpp"

namespace rsfair {

// Binary split of the user population under one sensitive attribute.
// Disadvantaged = smaller group by user count; ties break by lexicographic
// label order (flagged as degenerate parity).
struct GroupPartition {
  std::string attribute;
  std::string disadvantaged_label;  // group g
  std::string advantaged_label;     // group ~g
  std::vector<std::uint8_t> in_disadvantaged;  // by user_id
  std::size_t disadvantaged_count = 0;
  std::size_t advantaged_count = 0;
  bool tie = false;
};

GroupPartition identify_groups(const RatingDataset& dataset, const std::string& attribute);

struct FairnessReport {
  double ldap = 0.0;      // signed, group-g term minus group-~g term
  double ldap_abs = 0.0;
  double group_g_loss = 0.0;   // mean per-user normalized squared loss, g
  double group_ng_loss = 0.0;  // same for ~g
};

// One user's (predicted, true) pairs over their evaluated item set.
struct UserPredictions {
  std::uint32_t user_id = 0;
  std::vector<std::pair<double, double>> pairs;  // (r_hat, r)
};

// Demographic accuracy parity: difference of the two groups' mean per-user
// normalized squared losses. Users with no pairs are excluded; an empty group
// among the evaluated users is an error.
FairnessReport compute_ldap(const std::vector<UserPredictions>& predictions,
                            const GroupPartition& partition);

// Server-side seed data in FairMF layout: seed users reindexed to rows of
// U_fair, ratings grouped per seed user.
struct SeedData {
  std::vector<std::uint32_t> seed_users;             // row s -> user_id
  std::vector<std::vector<Rating>> ratings_by_row;   // per seed row, item ids are global
  std::vector<std::uint8_t> row_in_disadvantaged;    // by row
  std::size_t rows_g = 0;   // seed rows in the disadvantaged group
  std::size_t rows_ng = 0;
};

// Builds FairMF's view of the server seed. Rows with zero ratings are
// dropped. Errors if the seed is empty or either group has no seed rows.
SeedData build_seed_data(const Partition& partition, const GroupPartition& groups);

// L^dap evaluated on the seed ratings with U_fair rows / item vectors.
double seed_ldap(const SeedData& seed, const Matrix& fair_user_vectors,
                 const Matrix& item_vectors);

// Full-batch gradient of |L^dap| over the seed ratings (test-facing; the
// sweep applies the same per-pair contributions incrementally).
void seed_ldap_abs_gradient(const SeedData& seed, const Matrix& fair_user_vectors,
                            const Matrix& item_vectors, Matrix* user_grads,
                            Matrix* item_grads);

struct FairMfResult {
  Matrix fair_user_vectors;  // S x k
  Matrix fair_item_vectors;  // m x k; rows unrated in the seed pass through
};

// Server-side fair matrix factorization: fairmf_sweeps passes of per-rating
// gradient steps on the combined objective (regularized squared loss plus
// lambda_f * |L^dap|). The sweep's L^dap sign and per-group normalizers are
// frozen at the start of each sweep; pairs are visited in ascending
// (row, item) order so the procedure is deterministic.
FairMfResult fairmf(const SeedData& seed, const Matrix& item_vectors,
                    Matrix fair_user_vectors, const Hyperparams& hp, double gamma);

}  // namespace rsfair
