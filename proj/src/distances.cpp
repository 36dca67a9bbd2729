#include "mkvlab/distances.hpp"

#include "mkvlab/lp.hpp"
#include "mkvlab/rng.hpp"
#include "mkvlab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mkvlab {

namespace {

using Points = EmpiricalMeasure::Points;

void require_same_dim(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("dimension mismatch: " + std::to_string(mu.dim()) + " vs " +
                                std::to_string(nu.dim()));
}

Eigen::MatrixXd pairwise_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                              const std::function<double(double)>& of_distance) {
  Eigen::MatrixXd c(mu.size(), nu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    for (Eigen::Index j = 0; j < nu.size(); ++j)
      c(i, j) = of_distance((mu.points().row(i) - nu.points().row(j)).norm());
  return c;
}

double median_of(const Eigen::MatrixXd& c) {
  std::vector<double> v(c.data(), c.data() + c.size());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

double quantile_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k) {
  auto sorted = [](const EmpiricalMeasure& m) {
    std::vector<std::pair<double, double>> a(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      a[static_cast<std::size_t>(i)] = {m.points()(i, 0), m.weight(i)};
    std::sort(a.begin(), a.end());
    return a;
  };
  const auto a = sorted(mu);
  const auto b = sorted(nu);
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double step = std::min(ra, rb);
    if (step > 0.0) total += step * std::pow(std::abs(a[i].first - b[j].first), k);
    ra -= step;
    rb -= step;
    // Advance whichever marginal is exhausted; ties advance both.
    if (ra <= 1e-15) {
      if (++i < a.size()) ra = a[i].second;
    }
    if (rb <= 1e-15) {
      if (++j < b.size()) rb = b[j].second;
    }
  }
  return total;
}

}  // namespace

double TransportPlan::marginal_defect() const {
  const double r = (plan.rowwise().sum() - rows.weights()).cwiseAbs().maxCoeff();
  const double c = (plan.colwise().sum().transpose() - cols.weights()).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

nlohmann::json DistanceReport::to_json() const {
  nlohmann::json diag = nlohmann::json::object();
  diag["iterations"] = iterations;
  diag["duality_gap"] = duality_gap ? nlohmann::json(*duality_gap) : nlohmann::json(nullptr);
  diag["epsilon"] = epsilon ? nlohmann::json(*epsilon) : nlohmann::json(nullptr);
  diag["bins"] = bins ? nlohmann::json(*bins) : nlohmann::json(nullptr);
  diag["subsample_size"] =
      subsample_size ? nlohmann::json(*subsample_size) : nlohmann::json(nullptr);
  return {{"metric", metric}, {"value", value}, {"method", method}, {"diagnostics", diag}};
}

std::string to_string(OtMethod method) {
  switch (method) {
    case OtMethod::exact_lp:
      return "exact-LP";
    case OtMethod::quantile_1d:
      return "quantile-1d";
    case OtMethod::sinkhorn:
      return "sinkhorn";
  }
  return "unknown";
}

OtMethod ot_method_from_string(const std::string& name) {
  if (name == "exact-LP" || name == "exact_lp" || name == "lp") return OtMethod::exact_lp;
  if (name == "quantile-1d" || name == "quantile_1d" || name == "quantile")
    return OtMethod::quantile_1d;
  if (name == "sinkhorn") return OtMethod::sinkhorn;
  throw std::invalid_argument("unknown transport method '" + name + "'");
}

DistanceReport wasserstein_k(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                             OtMethod method, const OtOptions& options) {
  require_same_dim(mu, nu);
  if (!(k >= 1.0)) throw std::domain_error("wasserstein_k requires k >= 1");
  DistanceReport rep;
  std::ostringstream name;
  name << "W_" << k;
  rep.metric = name.str();
  rep.method = to_string(method);
  switch (method) {
    case OtMethod::exact_lp: {
      if (static_cast<long long>(mu.size()) * nu.size() > options.max_lp_cells)
        throw std::invalid_argument("exact-LP infeasible for " + std::to_string(mu.size()) + "x" +
                                    std::to_string(nu.size()) + " atoms");
      const auto cost = pairwise_cost(mu, nu, [k](double r) { return std::pow(r, k); });
      auto sol = transport::network_simplex(mu.weights(), nu.weights(), cost);
      rep.value = std::pow(std::max(0.0, sol.cost), 1.0 / k);
      rep.iterations = sol.iterations;
      rep.duality_gap = std::abs(sol.cost - sol.dual_objective);
      rep.plan = TransportPlan{mu, nu, std::move(sol.plan)};
      break;
    }
    case OtMethod::quantile_1d: {
      if (mu.dim() != 1) throw std::invalid_argument("quantile-1d requires d = 1");
      rep.value = std::pow(quantile_cost(mu, nu, k), 1.0 / k);
      break;
    }
    case OtMethod::sinkhorn: {
      const auto cost = pairwise_cost(mu, nu, [k](double r) { return std::pow(r, k); });
      double eps = options.sinkhorn_epsilon.value_or(0.01 * median_of(cost));
      if (!(eps > 0.0)) eps = 1e-3 * std::max(1e-12, cost.maxCoeff());
      if (!(eps > 0.0)) {
        rep.value = 0.0;  // all atoms coincide
        rep.epsilon = 0.0;
        break;
      }
      const auto sol = transport::sinkhorn(mu.weights(), nu.weights(), cost, eps,
                                           options.sinkhorn_tol, options.sinkhorn_max_iterations);
      rep.value = std::pow(std::max(0.0, sol.cost), 1.0 / k);
      rep.iterations = sol.iterations;
      rep.epsilon = eps;
      break;
    }
  }
  return rep;
}

SignedSupport signed_union(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double tol) {
  require_same_dim(mu, nu);
  const Eigen::Index n = mu.size() + nu.size();
  const Eigen::Index d = mu.dim();
  Points all(n, d);
  all.topRows(mu.size()) = mu.points();
  all.bottomRows(nu.size()) = nu.points();
  Eigen::VectorXd signed_mass(n);
  signed_mass.head(mu.size()) = mu.weights();
  signed_mass.tail(nu.size()) = -nu.weights();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (all(a, c) != all(b, c)) return all(a, c) < all(b, c);
    }
    return false;
  });
  std::vector<Eigen::Index> reps;
  std::vector<double> mass;
  for (Eigen::Index idx : order) {
    if (!reps.empty() && (all.row(idx) - all.row(reps.back())).cwiseAbs().maxCoeff() <= tol) {
      mass.back() += signed_mass(idx);
      continue;
    }
    reps.push_back(idx);
    mass.push_back(signed_mass(idx));
  }
  SignedSupport out{Points(static_cast<Eigen::Index>(reps.size()), d),
                    Eigen::VectorXd(static_cast<Eigen::Index>(reps.size()))};
  for (std::size_t i = 0; i < reps.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = all.row(reps[i]);
    out.mass(static_cast<Eigen::Index>(i)) = mass[i];
  }
  return out;
}

DistanceReport w_psi_dual(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          const PsiModulus& psi) {
  const SignedSupport support = signed_union(mu, nu);
  const Eigen::Index n = support.points.rows();
  if (n > 200)
    throw std::invalid_argument("w_psi_dual: combined support of " + std::to_string(n) +
                                " atoms exceeds 200");
  DistanceReport rep;
  rep.metric = "W_psi[" + psi.description() + "]";
  rep.method = "exact-LP";
  if (n == 1) {
    rep.duality_gap = 0.0;
    return rep;
  }
  // Unknowns f_1..f_{n-1}; f_0 = 0 fixes the additive constant.
  lp::InequalityLp problem;
  const Eigen::Index rows = n * (n - 1);
  problem.A = Eigen::MatrixXd::Zero(rows, n - 1);
  problem.b.resize(rows);
  problem.c = support.mass.tail(n - 1);
  problem.free.assign(static_cast<std::size_t>(n - 1), true);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      // f_i - f_j <= psi(|x_i - x_j|)
      if (i > 0) problem.A(r, i - 1) = 1.0;
      if (j > 0) problem.A(r, j - 1) = -1.0;
      problem.b(r) = psi((support.points.row(i) - support.points.row(j)).norm());
      ++r;
    }
  }
  const auto sol = lp::maximize(problem);
  if (sol.status != lp::Status::optimal)
    throw std::logic_error("w_psi_dual: LP did not reach optimality");
  rep.value = std::max(0.0, sol.objective);
  rep.iterations = sol.iterations;
  rep.duality_gap = std::abs(sol.objective - sol.dual_objective);
  return rep;
}

DistanceReport w_psi_primal(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const PsiModulus& psi, const OtOptions& options) {
  require_same_dim(mu, nu);
  if (static_cast<long long>(mu.size()) * nu.size() > options.max_lp_cells)
    throw std::invalid_argument("exact-LP infeasible for " + std::to_string(mu.size()) + "x" +
                                std::to_string(nu.size()) + " atoms");
  const auto cost = pairwise_cost(mu, nu, [&psi](double r) { return r <= 1e-12 ? 0.0 : psi(r); });
  auto sol = transport::network_simplex(mu.weights(), nu.weights(), cost);
  DistanceReport rep;
  rep.metric = "W_psi[" + psi.description() + "]";
  rep.method = "exact-LP";
  rep.value = std::max(0.0, sol.cost);
  rep.iterations = sol.iterations;
  rep.duality_gap = std::abs(sol.cost - sol.dual_objective);
  rep.plan = TransportPlan{mu, nu, std::move(sol.plan)};
  return rep;
}

namespace {

double iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return q(0.75) - q(0.25);
}

}  // namespace

DistanceReport total_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                               const TvOptions& options) {
  require_same_dim(mu, nu);
  DistanceReport rep;
  rep.metric = "TV";
  switch (options.mode) {
    case TvMode::shared_support: {
      const auto a = mu.merged(1e-12, true);
      const auto b = nu.merged(1e-12, true);
      bool same = a.size() == b.size();
      for (Eigen::Index i = 0; same && i < a.size(); ++i)
        same = (a.points().row(i) - b.points().row(i)).cwiseAbs().maxCoeff() <= 1e-12;
      if (!same)
        throw std::invalid_argument("total_variation: shared-support mode on mismatched supports");
      rep.value = (a.weights() - b.weights()).cwiseAbs().sum();
      rep.method = "closed-form";
      break;
    }
    case TvMode::atomic: {
      rep.value = signed_union(mu, nu).mass.cwiseAbs().sum();
      rep.method = "atomic";
      break;
    }
    case TvMode::histogram: {
      const Eigen::Index d = mu.dim();
      std::vector<int> bins(static_cast<std::size_t>(d));
      std::vector<double> lo(static_cast<std::size_t>(d)), width(static_cast<std::size_t>(d));
      const double pooled_n = static_cast<double>(mu.size() + nu.size());
      for (Eigen::Index c = 0; c < d; ++c) {
        std::vector<double> vals;
        for (Eigen::Index i = 0; i < mu.size(); ++i) vals.push_back(mu.points()(i, c));
        for (Eigen::Index i = 0; i < nu.size(); ++i) vals.push_back(nu.points()(i, c));
        const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
        const double range = *mx - *mn;
        int b = options.bins;
        if (b <= 0) {
          const double h = 2.0 * iqr(vals) * std::pow(pooled_n, -1.0 / 3.0);
          b = (h > 0.0 && range > 0.0) ? static_cast<int>(std::ceil(range / h)) : 1;
          b = std::clamp(b, 1, 10000);
        }
        bins[static_cast<std::size_t>(c)] = b;
        lo[static_cast<std::size_t>(c)] = *mn;
        width[static_cast<std::size_t>(c)] = range > 0.0 ? range / b : 1.0;
      }
      auto cell_of = [&](const EmpiricalMeasure& m, Eigen::Index i) {
        long long cell = 0;
        for (Eigen::Index c = 0; c < d; ++c) {
          const auto cc = static_cast<std::size_t>(c);
          int k = static_cast<int>((m.points()(i, c) - lo[cc]) / width[cc]);
          k = std::clamp(k, 0, bins[cc] - 1);
          cell = cell * bins[cc] + k;
        }
        return cell;
      };
      std::vector<std::pair<long long, double>> entries;
      for (Eigen::Index i = 0; i < mu.size(); ++i) entries.push_back({cell_of(mu, i), mu.weight(i)});
      for (Eigen::Index i = 0; i < nu.size(); ++i)
        entries.push_back({cell_of(nu, i), -nu.weight(i)});
      std::sort(entries.begin(), entries.end(),
                [](const auto& x, const auto& y) { return x.first < y.first; });
      double total = 0.0, acc = 0.0;
      for (std::size_t e = 0; e < entries.size(); ++e) {
        acc += entries[e].second;
        if (e + 1 == entries.size() || entries[e + 1].first != entries[e].first) {
          total += std::abs(acc);
          acc = 0.0;
        }
      }
      rep.value = total;
      rep.method = "histogram";
      int total_bins = 1;
      for (int b : bins) total_bins *= b;
      rep.bins = total_bins;
      break;
    }
  }
  return rep;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument(std::string(what) + ": not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument(std::string(what) + ": not positive semidefinite");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double gaussian_w2(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                   const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2) {
  if (mean1.size() != mean2.size() || cov1.rows() != mean1.size() || cov2.rows() != mean2.size())
    throw std::invalid_argument("gaussian_w2: dimension mismatch");
  psd_sqrt(cov1, "gaussian_w2 cov1");
  const Eigen::MatrixXd r2 = psd_sqrt(cov2, "gaussian_w2 cov2");
  Eigen::MatrixXd inner = r2 * cov1 * r2;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = psd_sqrt(inner, "gaussian_w2 cross term").trace();
  const double sq = (mean1 - mean2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross;
  return std::sqrt(std::max(0.0, sq));
}

double gaussian_kl(const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0,
                   const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1) {
  const Eigen::Index d = mean0.size();
  if (mean1.size() != d || cov0.rows() != d || cov1.rows() != d)
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> l0(cov0), l1(cov1);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success)
    throw std::domain_error("gaussian_kl: degenerate (non positive definite) covariance");
  const double logdet0 = 2.0 * l0.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd s1inv_s0 = l1.solve(cov0);
  const Eigen::VectorXd diff = mean1 - mean0;
  return 0.5 * (s1inv_s0.trace() + diff.dot(l1.solve(diff)) - static_cast<double>(d) + logdet1 -
                logdet0);
}

namespace {

// Distance from each query to its k-th nearest neighbour in `ref`; when
// `exclude_self` the query set equals ref and index i skips itself.
std::vector<double> kth_neighbour_distance(const EmpiricalMeasure::Points& query,
                                           const EmpiricalMeasure::Points& ref, int k,
                                           bool exclude_self) {
  const Eigen::Index n = query.rows(), m = ref.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  if (query.cols() == 1) {
    std::vector<double> sorted(ref.data(), ref.data() + m);
    std::sort(sorted.begin(), sorted.end());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = query(i, 0);
      auto pos = std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
      std::ptrdiff_t left = pos - 1, right = pos;
      bool skipped = !exclude_self;
      double dist = 0.0;
      for (int found = 0; found < k;) {
        const double dl = left >= 0 ? x - sorted[static_cast<std::size_t>(left)]
                                    : std::numeric_limits<double>::infinity();
        const double dr = right < static_cast<std::ptrdiff_t>(m)
                              ? sorted[static_cast<std::size_t>(right)] - x
                              : std::numeric_limits<double>::infinity();
        if (dr <= dl) {
          dist = dr;
          ++right;
        } else {
          dist = dl;
          --left;
        }
        if (!skipped && dist == 0.0) {
          skipped = true;  // the query point itself
          continue;
        }
        ++found;
      }
      out[static_cast<std::size_t>(i)] = dist;
    }
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    std::priority_queue<double> best;  // max-heap of the k smallest
    for (Eigen::Index j = 0; j < m; ++j) {
      if (exclude_self && j == i) continue;
      const double dist = (query.row(i) - ref.row(j)).norm();
      if (static_cast<int>(best.size()) < k) {
        best.push(dist);
      } else if (dist < best.top()) {
        best.pop();
        best.push(dist);
      }
    }
    out[static_cast<std::size_t>(i)] = best.top();
  }
  return out;
}

}  // namespace

double relative_entropy(const EmpiricalMeasure& p_samples, const EmpiricalMeasure& q_samples,
                        EntropyMode mode, int k) {
  require_same_dim(p_samples, q_samples);
  if (mode == EntropyMode::gaussian_closed_form) {
    return gaussian_kl(p_samples.mean(), p_samples.covariance(), q_samples.mean(),
                       q_samples.covariance());
  }
  if (k < 1) throw std::invalid_argument("knn entropy needs k >= 1");
  const Eigen::Index n = p_samples.size(), m = q_samples.size();
  if (n < k + 1 || m < k + 1)
    throw std::invalid_argument("knn entropy needs at least k + 1 samples from each law");
  const auto rho = kth_neighbour_distance(p_samples.points(), p_samples.points(), k, true);
  const auto nu = kth_neighbour_distance(p_samples.points(), q_samples.points(), k, false);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (!(rho[ii] > 0.0) || !(nu[ii] > 0.0))
      throw std::domain_error("knn entropy: coincident samples give a zero neighbour distance");
    acc += std::log(nu[ii] / rho[ii]);
  }
  const double d = static_cast<double>(p_samples.dim());
  return d * acc / static_cast<double>(n) +
         std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  nodes.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
  weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = v * v;
  }
}

double heat_smooth(const ScalarField& f, double t, const Eigen::VectorXd& x, int n_mc,
                   std::uint64_t seed) {
  if (!(t > 0.0)) throw std::domain_error("heat_smooth requires t > 0");
  const auto d = static_cast<int>(x.size());
  const double scale = std::sqrt(t);
  if (n_mc == 0 && d <= 3) {
    std::vector<double> nodes, weights;
    gauss_hermite(d == 1 ? 40 : (d == 2 ? 24 : 16), nodes, weights);
    const int q = static_cast<int>(nodes.size());
    long long total = 1;
    for (int c = 0; c < d; ++c) total *= q;
    double acc = 0.0;
    Eigen::VectorXd y(d);
    for (long long idx = 0; idx < total; ++idx) {
      long long rest = idx;
      double w = 1.0;
      for (int c = 0; c < d; ++c) {
        const auto node = static_cast<std::size_t>(rest % q);
        rest /= q;
        y(c) = x(c) + scale * nodes[node];
        w *= weights[node];
      }
      acc += w * f(y);
    }
    return acc;
  }
  const int samples = n_mc > 0 ? n_mc : 10000;
  PathStream stream(seed, 0x4ea7u);
  std::normal_distribution<double> normal;
  double acc = 0.0;
  Eigen::VectorXd y(d);
  for (int s = 0; s < samples; ++s) {
    for (int c = 0; c < d; ++c) y(c) = x(c) + scale * normal(stream);
    acc += f(y);
  }
  return acc / samples;
}

ScalarField tabulated_function(std::vector<std::pair<double, double>> knots) {
  if (knots.empty()) throw std::invalid_argument("tabulated_function needs knots");
  std::sort(knots.begin(), knots.end());
  return [knots = std::move(knots)](const Eigen::VectorXd& x) {
    const double r = x(0);
    if (r <= knots.front().first) return knots.front().second;
    if (r >= knots.back().first) return knots.back().second;
    const auto it = std::upper_bound(knots.begin(), knots.end(), r,
                                     [](double v, const auto& k) { return v < k.first; });
    const auto& [r1, v1] = *it;
    const auto& [r0, v0] = *(it - 1);
    return v0 + (v1 - v0) * (r - r0) / (r1 - r0);
  };
}

LemmaLwCurve lemma_lw_bound(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const PsiModulus& psi, const std::vector<double>& t_grid,
                            const TvOptions& tv) {
  if (t_grid.empty()) throw std::invalid_argument("lemma_lw_bound: empty t grid");
  LemmaLwCurve out;
  out.exact_tv = tv.mode != TvMode::histogram;
  out.lhs = w_psi_dual(mu, nu, psi).value;
  out.total_variation = total_variation(mu, nu, tv).value;
  OtOptions big;
  big.max_lp_cells = 1'000'000;
  out.w1 = wasserstein_k(mu, nu, 1.0, OtMethod::exact_lp, big).value;
  const double d = static_cast<double>(mu.dim());
  out.min_rhs = std::numeric_limits<double>::infinity();
  for (double t : t_grid) {
    if (!(t > 0.0)) throw std::domain_error("lemma_lw_bound: t must be positive");
    const double ps = psi(std::sqrt(t));
    const double rhs = std::sqrt(d) * ps * out.total_variation + d * ps / std::sqrt(t) * out.w1;
    out.t.push_back(t);
    out.rhs.push_back(rhs);
    if (rhs < out.min_rhs) {
      out.min_rhs = rhs;
      out.t_at_min = t;
    }
  }
  if (out.exact_tv && out.lhs > out.min_rhs + 1e-8)
    throw std::logic_error("lemma_lw_bound violated: W_psi = " + std::to_string(out.lhs) +
                           " > " + std::to_string(out.min_rhs));
  return out;
}

}  // namespace mkvlab
