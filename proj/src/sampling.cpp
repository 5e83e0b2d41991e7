#include "rsfair/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rsfair/protocol.hpp"
#include "rsfair/rng.hpp"

namespace rsfair {

double lemma1_bound(std::size_t sample_size, double epsilon) {
  if (sample_size == 0) throw std::invalid_argument("lemma1_bound: sample_size must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("lemma1_bound: epsilon must be > 0");
  const double raw =
      2.0 * std::exp(-2.0 * epsilon * epsilon / static_cast<double>(sample_size));
  return std::min(1.0, raw);
}

double theorem1_bound(const BoundQuery& q) {
  if (q.n == 0 || !(q.tau > 0.0 && q.tau <= 1.0) || !(q.epsilon > 0.0) ||
      !(q.range_lo < q.range_hi))
    throw std::invalid_argument("theorem1_bound: invalid query");
  const double width = q.range_hi - q.range_lo;
  const double raw = 2.0 * std::exp(-static_cast<double>(q.n) * q.tau * q.epsilon *
                                    q.epsilon / (2.0 * width * width));
  return std::min(1.0, raw);
}

McReport cluster_representation_mc(std::size_t n, std::size_t clusters, double tau,
                                   std::size_t trials, double deviation_frac,
                                   std::uint64_t rng_seed) {
  if (n == 0 || clusters == 0) throw std::invalid_argument("mc: n and clusters must be > 0");
  if (trials == 0) throw std::invalid_argument("mc: trials must be >= 1");

  // balanced assignment: shuffle clients, deal them into K near-equal clusters
  std::vector<std::uint32_t> label(n);
  {
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(rng_seed, Stream::mc_assignment));
    rng.shuffle(order);
    for (std::size_t i = 0; i < n; ++i)
      label[order[i]] = static_cast<std::uint32_t>(i % clusters);
  }

  McReport report;
  report.n = n;
  report.clusters = clusters;
  report.tau = tau;
  report.trials = trials;
  report.deviation_frac = deviation_frac;

  std::uint64_t exceeded = 0;
  std::uint64_t count_sum = 0;
  std::size_t min_count = std::numeric_limits<std::size_t>::max();
  std::vector<std::uint32_t> counts(clusters);
  std::size_t sample_size = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto chosen =
        sample_clients(n, tau, derive_seed(rng_seed, Stream::mc_trial, t));
    sample_size = chosen.size();
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto c : chosen) ++counts[label[c]];
    const double mean = static_cast<double>(sample_size) / static_cast<double>(clusters);
    const double threshold = deviation_frac * mean;
    for (const auto c : counts) {
      count_sum += c;
      min_count = std::min<std::size_t>(min_count, c);
      if (std::abs(static_cast<double>(c) - mean) > threshold) ++exceeded;
    }
  }
  report.sample_size = sample_size;
  report.mean_per_cluster_count = static_cast<double>(count_sum) /
                                  static_cast<double>(trials * clusters);
  report.exceedance_probability = static_cast<double>(exceeded) /
                                  static_cast<double>(trials * clusters);
  report.min_per_cluster_count = min_count;
  return report;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// k-means++: first centroid uniform, the rest D^2-weighted.
Matrix kmeanspp_init(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix centroids(k, d);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy_n(x.row(first).data(), d, centroids.row(0).data());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], sq_dist(x.row(i), centroids.row(c - 1)));
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));  // all points already covered
    }
    std::copy_n(x.row(pick).data(), d, centroids.row(c).data());
  }
  return centroids;
}

ClusterAssignment lloyd(const Matrix& x, Matrix centroids) {
  const std::size_t n = x.rows(), d = x.cols(), k = centroids.rows();
  ClusterAssignment out;
  out.clusters = k;
  out.labels.assign(n, 0);
  std::vector<std::uint32_t> prev(n, std::numeric_limits<std::uint32_t>::max());
  Matrix sums(k, d);
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    out.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(x.row(i), centroids.row(c));
        if (dd < best) {
          best = dd;
          best_c = static_cast<std::uint32_t>(c);
        }
      }
      out.labels[i] = best_c;
      out.inertia += best;
      if (best_c != prev[i]) changed = true;
    }
    if (!changed) break;
    prev = out.labels;
    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto srow = sums.row(out.labels[i]);
      const auto xr = x.row(i);
      for (std::size_t j = 0; j < d; ++j) srow[j] += xr[j];
      ++counts[out.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      auto crow = centroids.row(c);
      const auto srow = sums.row(c);
      for (std::size_t j = 0; j < d; ++j)
        crow[j] = srow[j] / static_cast<double>(counts[c]);
    }
  }
  out.centroids = std::move(centroids);
  return out;
}

}  // namespace

ClusterAssignment kmeans_fit(const Matrix& vectors, std::size_t clusters,
                             std::uint64_t rng_seed,
                             const ClusterAssignment* warm_start) {
  if (clusters == 0) throw std::invalid_argument("kmeans: clusters must be > 0");
  if (vectors.rows() < clusters)
    throw std::invalid_argument("kmeans: more clusters than points");
  constexpr int kRestarts = 10;
  ClusterAssignment best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < kRestarts; ++restart) {
    Rng rng(derive_seed(rng_seed, Stream::kmeans_restart,
                        clusters * 1000 + static_cast<std::size_t>(restart)));
    Matrix init;
    if (restart == 0 && warm_start != nullptr &&
        warm_start->centroids.rows() == clusters - 1) {
      // previous best plus one extra D^2-weighted centroid; guarantees the
      // elbow curve cannot rise when K grows
      init = Matrix(clusters, vectors.cols());
      for (std::size_t c = 0; c + 1 < clusters; ++c)
        std::copy_n(warm_start->centroids.row(c).data(), vectors.cols(),
                    init.row(c).data());
      std::vector<double> dist(vectors.rows());
      double total = 0.0;
      for (std::size_t i = 0; i < vectors.rows(); ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c + 1 < clusters; ++c)
          d = std::min(d, sq_dist(vectors.row(i), warm_start->centroids.row(c)));
        dist[i] = d;
        total += d;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        pick = vectors.rows() - 1;
        for (std::size_t i = 0; i < vectors.rows(); ++i) {
          acc += dist[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      }
      std::copy_n(vectors.row(pick).data(), vectors.cols(),
                  init.row(clusters - 1).data());
    } else {
      init = kmeanspp_init(vectors, clusters, rng);
    }
    ClusterAssignment fit = lloyd(vectors, std::move(init));
    if (fit.inertia < best.inertia) best = std::move(fit);
  }
  return best;
}

std::vector<std::pair<std::size_t, double>> kmeans_elbow(const Matrix& vectors,
                                                         std::vector<std::size_t> k_range,
                                                         std::uint64_t rng_seed) {
  std::sort(k_range.begin(), k_range.end());
  k_range.erase(std::unique(k_range.begin(), k_range.end()), k_range.end());
  std::vector<std::pair<std::size_t, double>> curve;
  curve.reserve(k_range.size());
  ClusterAssignment prev;
  bool have_prev = false;
  for (const std::size_t k : k_range) {
    const ClusterAssignment* warm =
        have_prev && prev.clusters + 1 == k ? &prev : nullptr;
    ClusterAssignment fit = kmeans_fit(vectors, k, rng_seed, warm);
    curve.emplace_back(k, fit.inertia);
    prev = std::move(fit);
    have_prev = true;
  }
  return curve;
}

}  // namespace rsfair
