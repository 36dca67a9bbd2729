#pragma once

// Reference computations used only by the tests. Nothing here calls into the
// transport or simulation code under test.

#include "mkvlab/measure.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Points = mkvlab::EmpiricalMeasure::Points;

/// Measure with n uniform-weight atoms drawn in [-box, box]^d.
inline mkvlab::EmpiricalMeasure random_uniform(std::mt19937_64& rng, int n, int d,
                                               double box = 2.0) {
  std::uniform_real_distribution<double> u(-box, box);
  Points p(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) p(i, j) = u(rng);
  return mkvlab::EmpiricalMeasure::uniform(std::move(p));
}

/// Measure with n atoms and random (Dirichlet-like) weights.
inline mkvlab::EmpiricalMeasure random_weighted(std::mt19937_64& rng, int n, int d,
                                                double box = 2.0) {
  std::uniform_real_distribution<double> u(-box, box);
  std::exponential_distribution<double> e(1.0);
  Points p(n, d);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) p(i, j) = u(rng);
    w(i) = e(rng) + 1e-3;
  }
  w /= w.sum();
  w(n - 1) = 1.0 - w.head(n - 1).sum();
  return mkvlab::EmpiricalMeasure(std::move(p), std::move(w));
}

/// Two measures on one shared random support (atoms of either may carry zero mass).
inline std::pair<mkvlab::EmpiricalMeasure, mkvlab::EmpiricalMeasure> random_shared_pair(
    std::mt19937_64& rng, int n, int d) {
  auto a = random_weighted(rng, n, d);
  auto b = random_weighted(rng, n, d);
  return {a, mkvlab::EmpiricalMeasure(a.points(), b.weights())};
}

/// Assignment-problem optimum for equal-size uniform measures. By Birkhoff's
/// theorem some permutation is an optimal plan, so enumerating all of them is
/// exact.
template <class Cost>
double best_permutation(int n, Cost cost) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

inline double wk_by_permutation(const mkvlab::EmpiricalMeasure& a,
                                const mkvlab::EmpiricalMeasure& b, double k) {
  const double c = best_permutation(static_cast<int>(a.size()), [&](int i, int j) {
    return std::pow((a.point(i) - b.point(j)).norm(), k);
  });
  return std::pow(c, 1.0 / k);
}

/// Total variation as the sum of |mass differences| after grouping atoms
/// that coincide exactly.
inline double tv_by_grouping(const mkvlab::EmpiricalMeasure& a, const mkvlab::EmpiricalMeasure& b) {
  std::vector<std::pair<std::vector<double>, double>> mass;
  auto add = [&](const mkvlab::EmpiricalMeasure& m, double sign) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::vector<double> key(m.points().row(i).data(), m.points().row(i).data() + m.dim());
      auto it = std::find_if(mass.begin(), mass.end(), [&](const auto& e) { return e.first == key; });
      if (it == mass.end()) mass.emplace_back(key, sign * m.weight(i));
      else it->second += sign * m.weight(i);
    }
  };
  add(a, 1.0);
  add(b, -1.0);
  double s = 0.0;
  for (const auto& e : mass) s += std::abs(e.second);
  return s;
}

/// Variance of X_t for dX = -theta X dt + sqrt(2 a) dW started at a point.
inline double ou_variance(double theta, double a, double t) {
  return a / theta * (1.0 - std::exp(-2.0 * theta * t));
}

/// Sample mean and unbiased variance.
inline std::pair<double, double> mean_var(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return {m, s / static_cast<double>(x.size() - 1)};
}

inline std::vector<double> column(const mkvlab::EmpiricalMeasure& m, int j = 0) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m.points()(i, j);
  return out;
}

/// Bisection on the admissibility predicate for the critical exponent, kept
/// separate from the library so the two can be compared.
inline double m0_by_scan(double p, double q, int d) {
  auto ok = [&](double m) {
    const double r = (m - 1.0) / m;
    return r * p > 1.0 && r * q > 1.0 && d / (p * r) + 2.0 / (q * r) < 2.0;
  };
  double lo = 1.0, hi = 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace oracle
