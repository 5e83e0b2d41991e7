#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsfair {

// Errors raised while ingesting or validating data; mapped to exit code 2 by
// the CLI.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Rating {
  std::uint32_t user_id = 0;  // 0-based reindexed
  std::uint32_t item_id = 0;  // 0-based reindexed
  double value = 0.0;
};

// Binary demographic labels per user. gender: "M"/"F"; age: ">=18"/"<18".
struct UserProfile {
  std::uint32_t user_id = 0;
  std::map<std::string, std::string> attributes;
};

struct RatingDataset {
  std::uint32_t n = 0;  // user count
  std::uint32_t m = 0;  // item count
  std::vector<Rating> ratings;
  std::vector<UserProfile> profiles;  // indexed by user_id
  double rating_min = 1.0;
  double rating_max = 5.0;
  // reindex maps back to the original file ids
  std::vector<std::uint32_t> original_user_id;
  std::vector<std::uint32_t> original_item_id;
};

enum class MovielensFormat { ml100k, ml1m };

std::string to_string(MovielensFormat f);
MovielensFormat movielens_format_from_string(const std::string& s);

// Reads the native rating + demographics files from `dir`:
//   ml100k: u.data (tab-separated user item rating timestamp), u.user
//           (pipe-separated id|age|gender|occupation|zip)
//   ml1m:   ratings.dat / users.dat ("::"-separated)
// Ids are reindexed to contiguous 0-based ranges in ascending original-id
// order. Age is binarized at 18 (ml1m band 1 means under 18).
RatingDataset load_movielens(const std::filesystem::path& dir, MovielensFormat format);

struct Partition {
  // Indexed by user_id; both empty for seed users.
  std::vector<std::vector<Rating>> train;
  std::vector<std::vector<Rating>> test;
  std::vector<Rating> server_seed;
  std::vector<std::uint32_t> seed_users;    // ascending
  std::vector<std::uint32_t> client_users;  // ascending
  double train_frac = 0.8;
  double seed_user_frac = 0.0;
  double seed_keep_frac = 1.0;
  std::uint64_t rng_seed = 0;
};

// Per-user random train/test split at train_frac; a seed_user_frac share of
// the data (whole users, greedy by random order toward the target rating
// count) is withheld into server_seed and removed from the client population.
// Users with fewer than 2 ratings keep everything in train.
Partition split(const RatingDataset& dataset, double train_frac,
                double seed_user_frac, std::uint64_t rng_seed);

// Each seed user retains a uniformly sampled keep_frac of their seed ratings
// (at least one). keep_frac = 1 returns the partition unchanged.
Partition restrict_seed_items(const Partition& partition, double keep_frac,
                              std::uint64_t rng_seed);

// JSON manifest: split parameters, user ids per side, counts, and a dataset
// fingerprint so a run can re-derive the exact partition.
struct Manifest {
  std::string format;
  std::string data_dir;
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint64_t rating_count = 0;
  double train_frac = 0.8;
  double seed_user_frac = 0.0;
  double seed_keep_frac = 1.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::uint32_t> seed_users;
  std::vector<std::uint32_t> client_users;
  std::uint64_t train_count = 0;
  std::uint64_t test_count = 0;
  std::uint64_t server_seed_count = 0;
};

Manifest make_manifest(const RatingDataset& dataset, const Partition& partition,
                       const std::string& format, const std::string& data_dir);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Count users per label for one attribute.
std::map<std::string, std::size_t> attribute_counts(const RatingDataset& dataset,
                                                    const std::string& attribute);

}  // namespace rsfair
