#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "oracles.hpp"
#include "rsfair/fairness.hpp"
#include "rsfair/rng.hpp"
#include "rsfair/synthetic.hpp"

using namespace rsfair;

namespace {

GroupPartition tiny_partition(std::size_t n_users, const std::vector<std::uint32_t>& g) {
  GroupPartition p;
  p.attribute = "gender";
  p.disadvantaged_label = "F";
  p.advantaged_label = "M";
  p.in_disadvantaged.assign(n_users, 0);
  for (const auto u : g) p.in_disadvantaged[u] = 1;
  p.disadvantaged_count = g.size();
  p.advantaged_count = n_users - g.size();
  return p;
}

GroupPartition flipped(const GroupPartition& p) {
  GroupPartition q = p;
  std::swap(q.disadvantaged_label, q.advantaged_label);
  std::swap(q.disadvantaged_count, q.advantaged_count);
  for (auto& flag : q.in_disadvantaged) flag = flag ? 0 : 1;
  return q;
}

// seed fixture with an engineered group gap: two user blocks want opposite
// signs on the same items, and the disadvantaged block is smaller
struct SeedFixture {
  SeedData seed;
  Matrix U;  // fair user vectors
  Matrix V;  // item vectors
};

SeedFixture engineered_seed(std::size_t k = 2, std::uint64_t rng_seed = 33) {
  SeedFixture f;
  const std::size_t users = 6, items = 8;
  Rng rng(rng_seed);
  f.U = Matrix(users, k);
  f.V = Matrix(items, k);
  for (auto& x : f.U.data()) x = rng.normal(0.0, 0.1);
  for (auto& x : f.V.data()) x = rng.normal(0.0, 0.1);
  f.seed.seed_users = {0, 1, 2, 3, 4, 5};
  f.seed.row_in_disadvantaged = {1, 1, 0, 0, 0, 0};
  f.seed.rows_g = 2;
  f.seed.rows_ng = 4;
  f.seed.ratings_by_row.resize(users);
  for (std::uint32_t s = 0; s < users; ++s) {
    const bool minority = s < 2;
    for (std::uint32_t i = 0; i < items; ++i) {
      // majority likes even items, minority the odd ones
      const bool likes = minority ? (i % 2 == 1) : (i % 2 == 0);
      f.seed.ratings_by_row[s].push_back({s, i, likes ? 5.0 : 1.0});
    }
  }
  return f;
}

}  // namespace

TEST_SUITE("fairness") {

TEST_CASE("compute_ldap trivial values") {
  const auto part = tiny_partition(2, {0});
  // identical per-user losses -> 0
  std::vector<UserPredictions> same{{0, {{3.0, 4.0}}}, {1, {{3.0, 4.0}}}};
  CHECK(compute_ldap(same, part).ldap == 0.0);

  // g: one user with squared loss 1 per item; ~g: one user with 0 -> 1
  std::vector<UserPredictions> gap{{0, {{3.0, 4.0}, {5.0, 4.0}}}, {1, {{2.0, 2.0}}}};
  const auto report = compute_ldap(gap, part);
  CHECK(report.ldap == 1.0);
  CHECK(report.ldap_abs == 1.0);
  CHECK(report.group_g_loss == 1.0);
  CHECK(report.group_ng_loss == 0.0);
}

TEST_CASE("compute_ldap matches a scalar double loop on 6 users") {
  Rng rng(3);
  const auto part = tiny_partition(6, {1, 4});
  std::vector<UserPredictions> preds;
  for (std::uint32_t u = 0; u < 6; ++u) {
    UserPredictions up{u, {}};
    const std::size_t items = 1 + static_cast<std::size_t>(rng.below(5));
    for (std::size_t j = 0; j < items; ++j)
      up.pairs.emplace_back(rng.uniform(1.0, 5.0), rng.uniform(1.0, 5.0));
    preds.push_back(std::move(up));
  }
  double g = 0.0, ng = 0.0;
  for (const auto& up : preds) {
    double loss = 0.0;
    for (const auto& [p, r] : up.pairs) loss += (p - r) * (p - r);
    loss /= static_cast<double>(up.pairs.size());
    (up.user_id == 1 || up.user_id == 4) ? g += loss : ng += loss;
  }
  const double expected = g / 2.0 - ng / 4.0;
  CHECK(compute_ldap(preds, part).ldap == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("antisymmetry under swapping the groups") {
    const auto swapped = compute_ldap(preds, flipped(part));
    CHECK(swapped.ldap == -compute_ldap(preds, part).ldap);
  }
  SUBCASE("duplicating a user's items with identical loss changes nothing") {
    auto doubled = preds;
    auto& pairs = doubled[2].pairs;
    const auto original = pairs;
    pairs.insert(pairs.end(), original.begin(), original.end());
    CHECK(compute_ldap(doubled, part).ldap ==
          doctest::Approx(compute_ldap(preds, part).ldap).epsilon(1e-12));
  }
  SUBCASE("empty group is an error") {
    const auto lonely = tiny_partition(6, {});
    CHECK_THROWS_AS(compute_ldap(preds, lonely), std::invalid_argument);
  }
}

TEST_CASE("identify_groups picks the smaller group") {
  SyntheticSpec spec;
  spec.users = 40;
  spec.items = 30;
  spec.rating_count = 800;
  spec.female_users = 10;
  spec.under18_users = 4;
  spec.min_ratings_per_user = 5;
  spec.max_ratings_per_user = 60;
  const auto dir = std::filesystem::temp_directory_path() / "rsfair_test_groups";
  std::filesystem::remove_all(dir);
  const auto ds = make_synthetic_dataset(dir, spec);

  const auto gender = identify_groups(ds, "gender");
  CHECK(gender.disadvantaged_label == "F");
  CHECK(gender.advantaged_label == "M");
  CHECK(gender.disadvantaged_count == 10);
  CHECK(gender.advantaged_count == 30);
  CHECK_FALSE(gender.tie);

  const auto age = identify_groups(ds, "age");
  CHECK(age.disadvantaged_label == "<18");
  CHECK(age.disadvantaged_count == 4);

  CHECK_THROWS_AS(identify_groups(ds, "zodiac"), DataError);
}

TEST_CASE("identify_groups tie breaks by label order and warns") {
  SyntheticSpec spec;
  spec.users = 20;
  spec.items = 25;
  spec.rating_count = 300;
  spec.female_users = 10;  // exact 50/50
  spec.under18_users = 2;
  spec.min_ratings_per_user = 5;
  spec.max_ratings_per_user = 40;
  const auto dir = std::filesystem::temp_directory_path() / "rsfair_test_tie";
  std::filesystem::remove_all(dir);
  const auto ds = make_synthetic_dataset(dir, spec);
  const auto gender = identify_groups(ds, "gender");
  CHECK(gender.tie);
  CHECK(gender.disadvantaged_label == "F");  // lexicographically first
}

TEST_CASE("|L^dap| gradient matches finite differences away from the kink") {
  auto fx = engineered_seed(3, 77);
  REQUIRE(std::abs(seed_ldap(fx.seed, fx.U, fx.V)) > 1e-6);

  Matrix gu, gv;
  seed_ldap_abs_gradient(fx.seed, fx.U, fx.V, &gu, &gv);
  std::vector<double> analytic = gu.data();
  analytic.insert(analytic.end(), gv.data().begin(), gv.data().end());

  std::vector<double> flat = fx.U.data();
  flat.insert(flat.end(), fx.V.data().begin(), fx.V.data().end());
  const std::size_t split = fx.U.data().size();
  auto objective = [&](const std::vector<double>& x) {
    Matrix U2 = fx.U, V2 = fx.V;
    std::copy(x.begin(), x.begin() + split, U2.data().begin());
    std::copy(x.begin() + split, x.end(), V2.data().begin());
    return std::abs(seed_ldap(fx.seed, U2, V2));
  };
  const auto fd = oracles::finite_difference(objective, flat);
  CHECK_MESSAGE(oracles::gradients_match(analytic, fd),
                "err=", oracles::max_gradient_error(analytic, fd));
}

TEST_CASE("fairmf with lambda_f 0 is plain per-rating SGD") {
  auto fx = engineered_seed(2, 41);
  Hyperparams hp;
  hp.k = 2;
  hp.lambda_f = 0.0;
  hp.lambda_r = 0.01;
  hp.fairmf_sweeps = 3;
  const double gamma = 0.05;
  const auto result = fairmf(fx.seed, fx.V, fx.U, hp, gamma);

  // independent scalar reimplementation of the sweeps
  Matrix U = fx.U, V = fx.V;
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (std::size_t s = 0; s < fx.seed.seed_users.size(); ++s) {
      for (const auto& r : fx.seed.ratings_by_row[s]) {
        double pred = 0.0;
        for (std::size_t d = 0; d < 2; ++d) pred += U.at(s, d) * V.at(r.item_id, d);
        const double e = pred - r.value;
        for (std::size_t d = 0; d < 2; ++d) {
          const double gu = e * V.at(r.item_id, d) + hp.lambda_r * U.at(s, d);
          const double gv = e * U.at(s, d) + hp.lambda_r * V.at(r.item_id, d);
          U.at(s, d) -= gamma * gu;
          V.at(r.item_id, d) -= gamma * gv;
        }
      }
    }
  }
  CHECK(result.fair_user_vectors == U);
  CHECK(result.fair_item_vectors == V);
}

TEST_CASE("fairmf with zero sweeps is the identity") {
  auto fx = engineered_seed();
  Hyperparams hp;
  hp.k = 2;
  hp.fairmf_sweeps = 0;
  const auto result = fairmf(fx.seed, fx.V, fx.U, hp, 0.05);
  CHECK(result.fair_user_vectors == fx.U);
  CHECK(result.fair_item_vectors == fx.V);
}

TEST_CASE("fairmf reduces |L^dap| on an engineered gap") {
  auto fx = engineered_seed(2, 55);
  const double before = std::abs(seed_ldap(fx.seed, fx.U, fx.V));
  Hyperparams hp;
  hp.k = 2;
  hp.lambda_f = 1.0;
  hp.lambda_r = 0.001;
  hp.fairmf_sweeps = 15;
  const auto result = fairmf(fx.seed, fx.V, fx.U, hp, 0.05);
  const double after =
      std::abs(seed_ldap(fx.seed, result.fair_user_vectors, result.fair_item_vectors));
  CHECK(after < before);
}

TEST_CASE("the fairness penalty tightens the gap beyond plain MF") {
  // k = 1 cannot fit both groups' opposite tastes; the equilibrium favors the
  // majority unless the penalty pushes back
  auto fx = engineered_seed(1, 91);
  Hyperparams hp;
  hp.k = 1;
  hp.lambda_r = 0.0;
  hp.fairmf_sweeps = 200;

  hp.lambda_f = 0.0;
  const auto plain = fairmf(fx.seed, fx.V, fx.U, hp, 0.02);
  const double gap_plain =
      std::abs(seed_ldap(fx.seed, plain.fair_user_vectors, plain.fair_item_vectors));

  hp.lambda_f = 40.0;
  const auto fair = fairmf(fx.seed, fx.V, fx.U, hp, 0.02);
  const double gap_fair =
      std::abs(seed_ldap(fx.seed, fair.fair_user_vectors, fair.fair_item_vectors));
  CHECK(gap_fair < gap_plain);
}

TEST_CASE("fairmf with lambda_f 0 decreases the seed loss monotonically") {
  auto fx = engineered_seed(2, 13);
  Hyperparams hp;
  hp.k = 2;
  hp.lambda_f = 0.0;
  hp.lambda_r = 0.01;
  hp.fairmf_sweeps = 1;

  auto loss = [&](const Matrix& U, const Matrix& V) {
    double s = 0.0;
    for (std::size_t row = 0; row < fx.seed.seed_users.size(); ++row)
      for (const auto& r : fx.seed.ratings_by_row[row]) {
        double e = -r.value;
        for (std::size_t d = 0; d < 2; ++d) e += U.at(row, d) * V.at(r.item_id, d);
        s += e * e;
      }
    return s;
  };

  Matrix U = fx.U, V = fx.V;
  double prev = loss(U, V);
  for (int sweep = 0; sweep < 10; ++sweep) {
    const auto result = fairmf(fx.seed, V, U, hp, 1e-3);
    U = result.fair_user_vectors;
    V = result.fair_item_vectors;
    const double now = loss(U, V);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("build_seed_data validation") {
  SyntheticSpec spec;
  spec.users = 30;
  spec.items = 40;
  spec.rating_count = 600;
  spec.female_users = 8;
  spec.under18_users = 3;
  spec.min_ratings_per_user = 5;
  spec.max_ratings_per_user = 50;
  const auto dir = std::filesystem::temp_directory_path() / "rsfair_test_seeddata";
  std::filesystem::remove_all(dir);
  const auto ds = make_synthetic_dataset(dir, spec);
  const auto groups = identify_groups(ds, "gender");

  const auto empty_seed = split(ds, 0.8, 0.0, 1);
  CHECK_THROWS_WITH_AS(build_seed_data(empty_seed, groups),
                       doctest::Contains("seed"), std::invalid_argument);

  const auto p = split(ds, 0.8, 0.3, 1);
  const auto seed = build_seed_data(p, groups);
  CHECK(seed.rows_g + seed.rows_ng == seed.seed_users.size());
  CHECK(seed.rows_g > 0);
  CHECK(seed.rows_ng > 0);
  std::size_t total = 0;
  for (const auto& rs : seed.ratings_by_row) total += rs.size();
  CHECK(total == p.server_seed.size());
}

}  // TEST_SUITE
