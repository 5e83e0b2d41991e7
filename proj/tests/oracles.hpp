#pragma once

// Test-only oracles, independent of the library's implementation paths:
// central finite differences and scalar-loop recomputations.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracles {

// Central finite differences with step h (default per the gradient checks:
// 1e-6) over a flat parameter vector.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-6) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// relative error <= rel_tol, or absolute <= abs_tol near zero
inline bool gradients_match(const std::vector<double>& analytic,
                            const std::vector<double>& fd, double rel_tol = 1e-5,
                            double abs_tol = 1e-8) {
  if (analytic.size() != fd.size()) return false;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - fd[i]);
    const double scale = std::max(std::abs(analytic[i]), std::abs(fd[i]));
    if (diff > abs_tol && diff > rel_tol * scale) return false;
  }
  return true;
}

inline double max_gradient_error(const std::vector<double>& analytic,
                                 const std::vector<double>& fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - fd[i]);
    const double scale = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-12});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

// plain elementwise sum-of-products
inline double dot_loop(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace oracles
