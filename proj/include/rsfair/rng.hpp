#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace rsfair {

// splitmix64 finalizer, used to derive independent stream seeds from a base
// seed plus one or two tags. Every random decision in the library draws from
// a stream named this way, so results never depend on scheduling or on the
// order in which unrelated components consume randomness.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(base ^ mix64(tag + 0x736f6d6570736575ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t sub) {
  return mix64(derive_seed(base, tag) ^ mix64(sub + 0x646f72616e646f6dULL));
}

// Stream tags. Adding a tag never perturbs existing streams.
enum class Stream : std::uint64_t {
  init_item_vectors = 1,
  init_fair_user_vectors = 2,
  init_client_vector = 3,
  virtual_items = 4,
  client_sampling = 5,
  split_user = 6,
  split_seed_order = 7,
  seed_item_restrict = 8,
  mc_assignment = 9,
  mc_trial = 10,
  kmeans_restart = 11,
  synthetic = 12,
  central_sweep = 13,
  plan_repetition = 14,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream s) {
  return derive_seed(base, static_cast<std::uint64_t>(s));
}
inline std::uint64_t derive_seed(std::uint64_t base, Stream s,
                                 std::uint64_t sub) {
  return derive_seed(base, static_cast<std::uint64_t>(s), sub);
}

// mt19937_64 engine (output sequence pinned by the standard) with hand-rolled
// distributions, so identical seeds reproduce identical draws on any
// platform / standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, bound) via rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: bound must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  // [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with a cached spare.
  double normal(double mean, double stddev) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = radius * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * radius * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), partial Fisher-Yates, order of selection.
  std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("sample_indices: k > n");
    std::vector<std::uint32_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rsfair
