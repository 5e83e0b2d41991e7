#pragma once

#include <cstdint>
#include <filesystem>

#include "rsfair/dataset.hpp"

namespace rsfair {

// Deterministic MovieLens-format benchmark corpus. Ratings come from a
// planted rank-20 latent model: bias dimensions, shared taste dimensions,
// and two minority "facet" blocks (gender, age) that only minority users
// weight. Because minority facets receive far less training signal, models
// trained on the corpus reproduce the group-accuracy disparity the fairness
// machinery is meant to close.
struct SyntheticSpec {
  std::uint32_t users = 943;
  std::uint32_t items = 1682;
  std::uint64_t rating_count = 100000;
  std::uint32_t female_users = 273;   // gender minority
  std::uint32_t under18_users = 54;   // age minority
  std::uint32_t min_ratings_per_user = 20;
  std::uint32_t max_ratings_per_user = 600;

  // latent structure
  double user_bias_mean = 3.55;
  double user_bias_std = 0.45;
  double item_bias_std = 0.45;
  double shared_user_std = 0.30;
  double shared_item_std = 0.30;
  double facet_item_std = 0.35;
  double gender_facet_user_std = 0.55;
  double age_facet_user_std = 0.55;
  double noise_sigma = 0.72;

  std::uint64_t rng_seed = 20240101;
};

// Writes the native rating/demographics files into `dir` (u.data + u.user for
// ml100k, ratings.dat + users.dat for ml1m).
void write_synthetic_movielens(const std::filesystem::path& dir, const SyntheticSpec& spec,
                               MovielensFormat format = MovielensFormat::ml100k);

// Convenience: generate into dir and load back.
RatingDataset make_synthetic_dataset(const std::filesystem::path& dir,
                                     const SyntheticSpec& spec,
                                     MovielensFormat format = MovielensFormat::ml100k);

}  // namespace rsfair
