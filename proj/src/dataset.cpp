#include "rsfair/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "rsfair/rng.hpp"

namespace rsfair {

std::string to_string(MovielensFormat f) {
  return f == MovielensFormat::ml100k ? "ml100k" : "ml1m";
}

MovielensFormat movielens_format_from_string(const std::string& s) {
  if (s == "ml100k") return MovielensFormat::ml100k;
  if (s == "ml1m") return MovielensFormat::ml1m;
  throw DataError("unknown MovieLens format: " + s);
}

namespace {

std::vector<std::string> split_fields(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

long parse_long(const std::string& s, const std::string& file, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(file + ":" + std::to_string(line_no) + ": malformed field '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& file, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(file + ":" + std::to_string(line_no) + ": malformed field '" + s + "'");
  }
}

struct RawRating {
  std::uint32_t user;
  std::uint32_t item;
  double value;
};

void read_ratings_file(const std::filesystem::path& path, const std::string& sep,
                       std::vector<RawRating>* out) {
  std::ifstream in(path);
  if (!in) throw DataError("missing ratings file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line, sep);
    if (fields.size() != 4)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 4 fields, got " + std::to_string(fields.size()));
    const long user = parse_long(fields[0], path.string(), line_no);
    const long item = parse_long(fields[1], path.string(), line_no);
    const double value = parse_double(fields[2], path.string(), line_no);
    if (user < 0 || item < 0)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": negative id");
    if (value < 1.0 || value > 5.0)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": rating outside [1,5]: " + fields[2]);
    out->push_back({static_cast<std::uint32_t>(user), static_cast<std::uint32_t>(item), value});
  }
}

// demographics: original user id -> (gender label, age label)
using Demographics = std::unordered_map<std::uint32_t, std::pair<std::string, std::string>>;

Demographics read_users_ml100k(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing demographics file: " + path.string());
  Demographics demo;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line, "|");
    if (fields.size() < 3)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected id|age|gender|...");
    const long id = parse_long(fields[0], path.string(), line_no);
    const long age = parse_long(fields[1], path.string(), line_no);
    const std::string& gender = fields[2];
    if (gender != "M" && gender != "F")
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": gender must be M or F");
    demo[static_cast<std::uint32_t>(id)] = {gender, age >= 18 ? ">=18" : "<18"};
  }
  return demo;
}

Demographics read_users_ml1m(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing demographics file: " + path.string());
  Demographics demo;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line, "::");
    if (fields.size() < 3)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected UserID::Gender::Age::...");
    const long id = parse_long(fields[0], path.string(), line_no);
    const std::string& gender = fields[1];
    if (gender != "M" && gender != "F")
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": gender must be M or F");
    const long age_band = parse_long(fields[2], path.string(), line_no);
    // ml1m encodes age bands; band 1 is "under 18".
    demo[static_cast<std::uint32_t>(id)] = {gender, age_band == 1 ? "<18" : ">=18"};
  }
  return demo;
}

}  // namespace

RatingDataset load_movielens(const std::filesystem::path& dir, MovielensFormat format) {
  const bool k100 = format == MovielensFormat::ml100k;
  const auto ratings_path = dir / (k100 ? "u.data" : "ratings.dat");
  const auto users_path = dir / (k100 ? "u.user" : "users.dat");

  std::vector<RawRating> raw;
  read_ratings_file(ratings_path, k100 ? "\t" : "::", &raw);
  const Demographics demo = k100 ? read_users_ml100k(users_path) : read_users_ml1m(users_path);

  // Contiguous 0-based reindex in ascending original-id order.
  std::set<std::uint32_t> user_ids, item_ids;
  for (const auto& r : raw) {
    user_ids.insert(r.user);
    item_ids.insert(r.item);
  }
  RatingDataset ds;
  ds.n = static_cast<std::uint32_t>(user_ids.size());
  ds.m = static_cast<std::uint32_t>(item_ids.size());
  ds.original_user_id.assign(user_ids.begin(), user_ids.end());
  ds.original_item_id.assign(item_ids.begin(), item_ids.end());
  std::unordered_map<std::uint32_t, std::uint32_t> user_index, item_index;
  user_index.reserve(ds.n);
  item_index.reserve(ds.m);
  for (std::uint32_t i = 0; i < ds.n; ++i) user_index[ds.original_user_id[i]] = i;
  for (std::uint32_t i = 0; i < ds.m; ++i) item_index[ds.original_item_id[i]] = i;

  ds.ratings.reserve(raw.size());
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(raw.size());
  for (const auto& r : raw) {
    const std::uint32_t u = user_index[r.user];
    const std::uint32_t i = item_index[r.item];
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
    if (!seen.insert(key).second)
      throw DataError(ratings_path.string() + ": duplicate (user,item) pair: " +
                      std::to_string(r.user) + "," + std::to_string(r.item));
    ds.ratings.push_back({u, i, r.value});
  }

  ds.profiles.resize(ds.n);
  for (std::uint32_t u = 0; u < ds.n; ++u) {
    const auto it = demo.find(ds.original_user_id[u]);
    if (it == demo.end())
      throw DataError(users_path.string() + ": user " +
                      std::to_string(ds.original_user_id[u]) + " missing from demographics");
    ds.profiles[u].user_id = u;
    ds.profiles[u].attributes["gender"] = it->second.first;
    ds.profiles[u].attributes["age"] = it->second.second;
  }
  return ds;
}

Partition split(const RatingDataset& dataset, double train_frac,
                double seed_user_frac, std::uint64_t rng_seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw std::invalid_argument("train_frac must be in (0, 1)");
  if (!(seed_user_frac >= 0.0 && seed_user_frac < 1.0))
    throw std::invalid_argument("seed_user_frac must be in [0, 1)");

  std::vector<std::vector<Rating>> per_user(dataset.n);
  for (const auto& r : dataset.ratings) per_user[r.user_id].push_back(r);

  Partition p;
  p.train.resize(dataset.n);
  p.test.resize(dataset.n);
  p.train_frac = train_frac;
  p.seed_user_frac = seed_user_frac;
  p.rng_seed = rng_seed;

  // Seed users: greedy by random order toward seed_user_frac of all ratings,
  // taking whole users while that improves closeness to the target.
  std::vector<std::uint8_t> is_seed(dataset.n, 0);
  if (seed_user_frac > 0.0) {
    const double target = seed_user_frac * static_cast<double>(dataset.ratings.size());
    std::vector<std::uint32_t> order(dataset.n);
    for (std::uint32_t u = 0; u < dataset.n; ++u) order[u] = u;
    Rng rng(derive_seed(rng_seed, Stream::split_seed_order));
    rng.shuffle(order);
    double acc = 0.0;
    for (const std::uint32_t u : order) {
      if (acc >= target) break;
      const double c = static_cast<double>(per_user[u].size());
      if (std::abs(acc + c - target) <= std::abs(acc - target)) {
        is_seed[u] = 1;
        acc += c;
      }
    }
  }

  std::size_t unsplittable = 0;
  for (std::uint32_t u = 0; u < dataset.n; ++u) {
    auto& ratings = per_user[u];
    if (is_seed[u]) {
      p.seed_users.push_back(u);
      for (const auto& r : ratings) p.server_seed.push_back(r);
      continue;
    }
    p.client_users.push_back(u);
    if (ratings.size() < 2) {
      // cannot split; keep everything in train
      p.train[u] = ratings;
      if (!ratings.empty()) ++unsplittable;
      continue;
    }
    Rng rng(derive_seed(rng_seed, Stream::split_user, u));
    rng.shuffle(ratings);
    const auto c = static_cast<double>(ratings.size());
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * c));
    n_train = std::clamp<std::size_t>(n_train, 1, ratings.size() - 1);
    p.train[u].assign(ratings.begin(), ratings.begin() + static_cast<std::ptrdiff_t>(n_train));
    p.test[u].assign(ratings.begin() + static_cast<std::ptrdiff_t>(n_train), ratings.end());
  }
  if (unsplittable > 0)
    std::cerr << "[warn] " << unsplittable
              << " user(s) had < 2 ratings; kept all their ratings in train\n";

  // Canonical ordering for byte-stable serialization.
  std::sort(p.server_seed.begin(), p.server_seed.end(), [](const Rating& a, const Rating& b) {
    return a.user_id != b.user_id ? a.user_id < b.user_id : a.item_id < b.item_id;
  });
  return p;
}

Partition restrict_seed_items(const Partition& partition, double keep_frac,
                              std::uint64_t rng_seed) {
  if (!(keep_frac > 0.0 && keep_frac <= 1.0))
    throw std::invalid_argument("keep_frac must be in (0, 1]");
  if (keep_frac == 1.0) return partition;

  std::unordered_map<std::uint32_t, std::vector<Rating>> per_seed_user;
  for (const auto& r : partition.server_seed) per_seed_user[r.user_id].push_back(r);

  Partition out = partition;
  out.server_seed.clear();
  out.seed_keep_frac = keep_frac;
  for (const std::uint32_t u : partition.seed_users) {
    auto& ratings = per_seed_user[u];
    const auto c = static_cast<double>(ratings.size());
    auto n_keep = static_cast<std::size_t>(std::llround(keep_frac * c));
    n_keep = std::clamp<std::size_t>(n_keep, 1, ratings.size());
    Rng rng(derive_seed(rng_seed, Stream::seed_item_restrict, u));
    auto picks = rng.sample_indices(ratings.size(), n_keep);
    std::sort(picks.begin(), picks.end());
    for (const auto idx : picks) out.server_seed.push_back(ratings[idx]);
  }
  std::sort(out.server_seed.begin(), out.server_seed.end(), [](const Rating& a, const Rating& b) {
    return a.user_id != b.user_id ? a.user_id < b.user_id : a.item_id < b.item_id;
  });
  return out;
}

Manifest make_manifest(const RatingDataset& dataset, const Partition& partition,
                       const std::string& format, const std::string& data_dir) {
  Manifest m;
  m.format = format;
  m.data_dir = data_dir;
  m.n = dataset.n;
  m.m = dataset.m;
  m.rating_count = dataset.ratings.size();
  m.train_frac = partition.train_frac;
  m.seed_user_frac = partition.seed_user_frac;
  m.seed_keep_frac = partition.seed_keep_frac;
  m.rng_seed = partition.rng_seed;
  m.seed_users = partition.seed_users;
  m.client_users = partition.client_users;
  for (const auto& per_user : partition.train) m.train_count += per_user.size();
  for (const auto& per_user : partition.test) m.test_count += per_user.size();
  m.server_seed_count = partition.server_seed.size();
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["created_at"] = []() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return std::string(buf);
  }();
  j["dataset"] = {{"format", manifest.format},
                  {"dir", manifest.data_dir},
                  {"n", manifest.n},
                  {"m", manifest.m},
                  {"ratings", manifest.rating_count}};
  j["split"] = {{"train_frac", manifest.train_frac},
                {"seed_user_frac", manifest.seed_user_frac},
                {"seed_keep_frac", manifest.seed_keep_frac},
                {"rng_seed", manifest.rng_seed}};
  j["seed_users"] = manifest.seed_users;
  j["client_users"] = manifest.client_users;
  j["counts"] = {{"train", manifest.train_count},
                 {"test", manifest.test_count},
                 {"server_seed", manifest.server_seed_count}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest parse error: " + std::string(e.what()));
  }
  Manifest m;
  m.format = j.at("dataset").at("format").get<std::string>();
  m.data_dir = j.at("dataset").at("dir").get<std::string>();
  m.n = j.at("dataset").at("n").get<std::uint32_t>();
  m.m = j.at("dataset").at("m").get<std::uint32_t>();
  m.rating_count = j.at("dataset").at("ratings").get<std::uint64_t>();
  m.train_frac = j.at("split").at("train_frac").get<double>();
  m.seed_user_frac = j.at("split").at("seed_user_frac").get<double>();
  m.seed_keep_frac = j.at("split").at("seed_keep_frac").get<double>();
  m.rng_seed = j.at("split").at("rng_seed").get<std::uint64_t>();
  m.seed_users = j.at("seed_users").get<std::vector<std::uint32_t>>();
  m.client_users = j.at("client_users").get<std::vector<std::uint32_t>>();
  m.train_count = j.at("counts").at("train").get<std::uint64_t>();
  m.test_count = j.at("counts").at("test").get<std::uint64_t>();
  m.server_seed_count = j.at("counts").at("server_seed").get<std::uint64_t>();
  return m;
}

std::map<std::string, std::size_t> attribute_counts(const RatingDataset& dataset,
                                                    const std::string& attribute) {
  std::map<std::string, std::size_t> counts;
  for (const auto& profile : dataset.profiles) {
    const auto it = profile.attributes.find(attribute);
    if (it == profile.attributes.end())
      throw DataError("user " + std::to_string(profile.user_id) +
                      " missing attribute '" + attribute + "'");
    ++counts[it->second];
  }
  return counts;
}

}  // namespace rsfair
