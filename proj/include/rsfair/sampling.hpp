#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rsfair/matrix.hpp"

namespace rsfair {

// P(|count_j - |C^tau|/K| >= eps) <= min(1, 2 exp(-2 eps^2 / |C^tau|)).
double lemma1_bound(std::size_t sample_size, double epsilon);

struct BoundQuery {
  std::size_t n = 0;        // population
  double tau = 0.0;         // sampled fraction
  double epsilon = 0.0;     // deviation
  double range_lo = 1.0;    // a
  double range_hi = 5.0;    // b
  std::optional<std::size_t> clusters;  // K, echoed for Lemma-1 queries
};

// P(|U^T Vbar_tau - U^T Vbar_n| >= eps) <= min(1, 2 exp(-n tau eps^2 / (2 (b-a)^2))).
double theorem1_bound(const BoundQuery& q);

struct McReport {
  std::size_t n = 0;
  std::size_t clusters = 0;
  double tau = 0.0;
  std::size_t trials = 0;
  double deviation_frac = 0.0;
  std::size_t sample_size = 0;          // |C^tau|
  double mean_per_cluster_count = 0.0;  // over all (trial, cluster) pairs
  double exceedance_probability = 0.0;  // P(|count - |C^tau|/K| > frac * |C^tau|/K)
  std::size_t min_per_cluster_count = 0;
};

// Clients are dealt into K equal-size clusters (random permutation; sizes
// differ by at most one when K does not divide n), then `trials` independent
// samples of ceil(tau*n) clients are drawn without replacement and per-cluster
// counts recorded.
McReport cluster_representation_mc(std::size_t n, std::size_t clusters, double tau,
                                   std::size_t trials, double deviation_frac,
                                   std::uint64_t rng_seed);

struct ClusterAssignment {
  std::size_t clusters = 0;
  std::vector<std::uint32_t> labels;
  Matrix centroids;   // K x d
  double inertia = 0.0;  // sum of squared distances to assigned centroid
};

// Lloyd's algorithm with k-means++ seeding; 10 restarts keeping the best
// inertia (one restart per K > min(K_range) warm-starts from the previous
// best, which makes the elbow curve non-increasing in K). Convergence when
// assignments stabilize or after 300 iterations.
ClusterAssignment kmeans_fit(const Matrix& vectors, std::size_t clusters,
                             std::uint64_t rng_seed,
                             const ClusterAssignment* warm_start = nullptr);

std::vector<std::pair<std::size_t, double>> kmeans_elbow(const Matrix& vectors,
                                                         std::vector<std::size_t> k_range,
                                                         std::uint64_t rng_seed);

}  // namespace rsfair
