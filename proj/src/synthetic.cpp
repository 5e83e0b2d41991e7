#include "rsfair/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rsfair/rng.hpp"

namespace rsfair {

namespace {

constexpr std::size_t kLatentDim = 20;
constexpr std::size_t kBiasDim = 0;        // user bias x item sensitivity
constexpr std::size_t kItemBiasDim = 1;    // item bias x user sensitivity
constexpr std::size_t kSharedFirst = 2;    // 12 shared taste dims
constexpr std::size_t kSharedCount = 12;
constexpr std::size_t kGenderFacetFirst = 14;  // 3 dims, weighted by F users
constexpr std::size_t kAgeFacetFirst = 17;     // 3 dims, weighted by <18 users
constexpr std::size_t kFacetCount = 3;

struct Latents {
  std::vector<std::array<double, kLatentDim>> user;
  std::vector<std::array<double, kLatentDim>> item;
};

// Exact-total integer allocation: min per user plus largest-remainder shares
// of the remainder, proportional to lognormal weights, capped per user.
std::vector<std::uint32_t> allocate_counts(const SyntheticSpec& spec, Rng& rng) {
  const std::uint64_t total = spec.rating_count;
  const std::uint32_t cap = std::min(spec.max_ratings_per_user, spec.items);
  const std::uint64_t floor_total =
      static_cast<std::uint64_t>(spec.users) * spec.min_ratings_per_user;
  if (spec.min_ratings_per_user > cap)
    throw std::invalid_argument("min_ratings_per_user exceeds the per-user cap");
  if (floor_total > total)
    throw std::invalid_argument("rating_count too small for min_ratings_per_user");

  std::vector<double> weight(spec.users);
  for (auto& w : weight) w = std::exp(rng.normal(0.0, 0.85));
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);

  const auto spread = static_cast<double>(total - floor_total);
  std::vector<std::uint32_t> counts(spec.users);
  std::vector<std::pair<double, std::uint32_t>> remainders(spec.users);
  std::uint64_t assigned = 0;
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    const double share = spread * weight[u] / wsum;
    counts[u] = std::min<std::uint32_t>(
        spec.min_ratings_per_user + static_cast<std::uint32_t>(share), cap);
    assigned += counts[u];
    remainders[u] = {share - std::floor(share), u};
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  // distribute the leftover one at a time, round-robin by remainder rank
  std::uint64_t leftover = total - assigned;
  while (leftover > 0) {
    bool progressed = false;
    for (const auto& [frac, u] : remainders) {
      if (leftover == 0) break;
      if (counts[u] < cap) {
        ++counts[u];
        --leftover;
        progressed = true;
      }
    }
    if (!progressed)
      throw std::invalid_argument("cannot place all ratings under the per-user cap");
  }
  return counts;
}

Latents draw_latents(const SyntheticSpec& spec, const std::vector<std::uint8_t>& is_female,
                     const std::vector<std::uint8_t>& is_under18, Rng& rng) {
  Latents lat;
  lat.item.resize(spec.items);
  for (std::uint32_t i = 0; i < spec.items; ++i) {
    auto& v = lat.item[i];
    v[kBiasDim] = rng.normal(1.0, 0.08);
    v[kItemBiasDim] = rng.normal(0.0, spec.item_bias_std);
    for (std::size_t d = 0; d < kSharedCount; ++d)
      v[kSharedFirst + d] = rng.normal(0.0, spec.shared_item_std);
    for (std::size_t d = 0; d < kFacetCount; ++d) {
      v[kGenderFacetFirst + d] = rng.normal(0.0, spec.facet_item_std);
      v[kAgeFacetFirst + d] = rng.normal(0.0, spec.facet_item_std);
    }
  }
  lat.user.resize(spec.users);
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    auto& w = lat.user[u];
    w[kBiasDim] = rng.normal(spec.user_bias_mean, spec.user_bias_std);
    w[kItemBiasDim] = rng.normal(1.0, 0.08);
    for (std::size_t d = 0; d < kSharedCount; ++d)
      w[kSharedFirst + d] = rng.normal(0.0, spec.shared_user_std);
    for (std::size_t d = 0; d < kFacetCount; ++d) {
      w[kGenderFacetFirst + d] =
          is_female[u] ? rng.normal(0.0, spec.gender_facet_user_std) : 0.0;
      w[kAgeFacetFirst + d] =
          is_under18[u] ? rng.normal(0.0, spec.age_facet_user_std) : 0.0;
    }
  }
  return lat;
}

// Weighted sampling without replacement (Efraimidis-Spirakis keys).
std::vector<std::uint32_t> sample_items(std::uint32_t count, const std::vector<double>& popularity,
                                        Rng& rng) {
  const std::size_t m = popularity.size();
  std::vector<std::pair<double, std::uint32_t>> keys(m);
  for (std::size_t i = 0; i < m; ++i) {
    double u = rng.uniform01();
    while (u <= 0.0) u = rng.uniform01();
    keys[i] = {-std::log(u) / popularity[i], static_cast<std::uint32_t>(i)};
  }
  std::nth_element(keys.begin(), keys.begin() + count, keys.end());
  std::vector<std::uint32_t> picked(count);
  for (std::uint32_t j = 0; j < count; ++j) picked[j] = keys[j].second;
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

void write_synthetic_movielens(const std::filesystem::path& dir, const SyntheticSpec& spec,
                               MovielensFormat format) {
  if (spec.female_users > spec.users || spec.under18_users > spec.users)
    throw std::invalid_argument("minority counts exceed user count");
  std::filesystem::create_directories(dir);

  Rng rng(derive_seed(spec.rng_seed, Stream::synthetic));

  // demographics: independent random minority assignments
  std::vector<std::uint32_t> order(spec.users);
  std::vector<std::uint8_t> is_female(spec.users, 0), is_under18(spec.users, 0);
  for (std::uint32_t u = 0; u < spec.users; ++u) order[u] = u;
  rng.shuffle(order);
  for (std::uint32_t j = 0; j < spec.female_users; ++j) is_female[order[j]] = 1;
  rng.shuffle(order);
  for (std::uint32_t j = 0; j < spec.under18_users; ++j) is_under18[order[j]] = 1;

  const Latents lat = draw_latents(spec, is_female, is_under18, rng);
  const std::vector<std::uint32_t> counts = allocate_counts(spec, rng);

  std::vector<double> popularity(spec.items);
  for (auto& w : popularity) w = std::exp(rng.normal(0.0, 1.1));

  std::vector<std::vector<std::uint32_t>> items_of(spec.users);
  std::vector<std::uint32_t> raters(spec.items, 0);
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    items_of[u] = sample_items(counts[u], popularity, rng);
    for (const auto i : items_of[u]) ++raters[i];
  }

  // coverage fixup: every item must be rated at least once so the loaded
  // dataset has exactly `items` distinct items
  std::vector<std::uint32_t> users_by_count(spec.users);
  for (std::uint32_t u = 0; u < spec.users; ++u) users_by_count[u] = u;
  std::sort(users_by_count.begin(), users_by_count.end(), [&](std::uint32_t a, std::uint32_t b) {
    return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
  });
  for (std::uint32_t missing = 0; missing < spec.items; ++missing) {
    if (raters[missing] > 0) continue;
    bool placed = false;
    for (const std::uint32_t u : users_by_count) {
      auto& list = items_of[u];
      if (std::binary_search(list.begin(), list.end(), missing)) continue;
      // drop this user's most redundant item (most raters elsewhere)
      auto victim = list.end();
      std::uint32_t best = 1;
      for (auto it = list.begin(); it != list.end(); ++it) {
        if (raters[*it] > best) {
          best = raters[*it];
          victim = it;
        }
      }
      if (victim == list.end()) continue;
      --raters[*victim];
      list.erase(victim);
      list.insert(std::upper_bound(list.begin(), list.end(), missing), missing);
      ++raters[missing];
      placed = true;
      break;
    }
    if (!placed) throw std::runtime_error("synthetic corpus: cannot cover every item");
  }

  // ratings
  const bool k100 = format == MovielensFormat::ml100k;
  std::ofstream data(dir / (k100 ? "u.data" : "ratings.dat"));
  if (!data) throw std::runtime_error("cannot write ratings into " + dir.string());
  std::uint64_t stamp = 874965758;
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    for (const std::uint32_t i : items_of[u]) {
      double value = 0.0;
      for (std::size_t d = 0; d < kLatentDim; ++d) value += lat.user[u][d] * lat.item[i][d];
      value += rng.normal(0.0, spec.noise_sigma);
      const long r = std::clamp<long>(std::lround(value), 1, 5);
      if (k100)
        data << (u + 1) << '\t' << (i + 1) << '\t' << r << '\t' << stamp++ << '\n';
      else
        data << (u + 1) << "::" << (i + 1) << "::" << r << "::" << stamp++ << '\n';
    }
  }
  data.close();

  std::ofstream users(dir / (k100 ? "u.user" : "users.dat"));
  if (!users) throw std::runtime_error("cannot write users into " + dir.string());
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    const char gender = is_female[u] ? 'F' : 'M';
    if (k100) {
      const int age = is_under18[u] ? 16 : 30;
      users << (u + 1) << '|' << age << '|' << gender << "|other|00000\n";
    } else {
      const int band = is_under18[u] ? 1 : 25;
      users << (u + 1) << "::" << gender << "::" << band << "::0::00000\n";
    }
  }
}

RatingDataset make_synthetic_dataset(const std::filesystem::path& dir,
                                     const SyntheticSpec& spec, MovielensFormat format) {
  write_synthetic_movielens(dir, spec, format);
  return load_movielens(dir, format);
}

}  // namespace rsfair
