#pragma once

#include "mkvlab/measure.hpp"
#include "mkvlab/psi_modulus.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mkvlab {

struct TransportPlan {
  EmpiricalMeasure rows;
  EmpiricalMeasure cols;
  Eigen::MatrixXd plan;

  /// Largest deviation of row/column sums from the marginal weights.
  double marginal_defect() const;
};

struct DistanceReport {
  std::string metric;
  double value = 0.0;
  std::string method;  ///< exact-LP | quantile-1d | sinkhorn | histogram | knn | closed-form | atomic
  int iterations = 0;
  std::optional<double> duality_gap;
  std::optional<double> epsilon;
  std::optional<int> bins;
  std::optional<int> subsample_size;
  std::optional<TransportPlan> plan;

  nlohmann::json to_json() const;
};

enum class OtMethod { exact_lp, quantile_1d, sinkhorn };

std::string to_string(OtMethod method);
OtMethod ot_method_from_string(const std::string& name);

struct OtOptions {
  /// Largest n*m accepted by the exact LP.
  long long max_lp_cells = 10'000;
  /// Entropic regularization; default is 0.01 * median pairwise cost.
  std::optional<double> sinkhorn_epsilon;
  double sinkhorn_tol = 1e-6;
  int sinkhorn_max_iterations = 100'000;
};

/// L^k Wasserstein distance, (min over couplings of sum pi_ij |x_i - y_j|^k)^(1/k),
/// k >= 1.
DistanceReport wasserstein_k(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                             OtMethod method, const OtOptions& options = {});

/// W_psi as the linear program  max sum (mu_i - nu_i) f_i  s.t. |f_i - f_j| <= psi(|x_i - x_j|)
/// over the merged support (at most 200 atoms), gauge f_1 = 0.
DistanceReport w_psi_dual(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          const PsiModulus& psi);

/// W_psi as optimal transport with cost psi(|x - y|) off the diagonal and 0 on it.
DistanceReport w_psi_primal(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const PsiModulus& psi, const OtOptions& options = {});

enum class TvMode {
  shared_support,  ///< both measures list the same atoms (zero weights allowed)
  atomic,          ///< exact for atom-supported measures: sum over the union of atoms
  histogram,       ///< binned masses on a shared grid (biased for continuous laws)
};

struct TvOptions {
  TvMode mode = TvMode::shared_support;
  /// Histogram bins per axis; 0 selects the Freedman-Diaconis width.
  int bins = 0;
};

/// Total variation sup_{|f| <= 1} |mu(f) - nu(f)| = sum |mu_i - nu_i| (maximum 2).
DistanceReport total_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                               const TvOptions& options = {});

/// Closed-form W_2 between Gaussians N(m1, S1) and N(m2, S2).
double gaussian_w2(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                   const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2);

/// KL(N(m0, S0) || N(m1, S1)).
double gaussian_kl(const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0,
                   const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1);

enum class EntropyMode { knn, gaussian_closed_form };

/// Relative entropy Ent(P|Q) from samples of P and Q: either the k-nearest
/// neighbour estimator of Wang, Kulkarni and Verdu, or KL between fitted Gaussians.
double relative_entropy(const EmpiricalMeasure& p_samples, const EmpiricalMeasure& q_samples,
                        EntropyMode mode, int k = 1);

using ScalarField = std::function<double(const Eigen::VectorXd&)>;

/// E[f(x + B_t)] with B_t ~ N(0, t I). Tensorized Gauss-Hermite for d <= 3
/// when n_mc == 0, Monte Carlo with n_mc samples otherwise.
double heat_smooth(const ScalarField& f, double t, const Eigen::VectorXd& x, int n_mc = 0,
                   std::uint64_t seed = 0);

/// Piecewise-linear interpolant of a 1-d table, constant beyond the ends.
ScalarField tabulated_function(std::vector<std::pair<double, double>> knots);

/// Probabilists' Gauss-Hermite rule (weight exp(-z^2/2)/sqrt(2 pi)).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

struct LemmaLwCurve {
  std::vector<double> t;
  std::vector<double> rhs;
  double min_rhs = 0.0;
  double t_at_min = 0.0;
  double lhs = 0.0;
  double total_variation = 0.0;
  double w1 = 0.0;
  bool exact_tv = true;
};

/// Compares W_psi(mu, nu) with sqrt(d) psi(sqrt t) TV + d psi(sqrt t)/sqrt(t) W_1
/// over t_grid. With exact (atomic) TV a violation beyond 1e-8 throws
/// std::logic_error.
LemmaLwCurve lemma_lw_bound(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const PsiModulus& psi, const std::vector<double>& t_grid,
                            const TvOptions& tv = {TvMode::atomic, 0});

/// Union of the supports with signed mass mu - nu per merged atom.
struct SignedSupport {
  EmpiricalMeasure::Points points;
  Eigen::VectorXd mass;
};
SignedSupport signed_union(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           double tol = 1e-12);

}  // namespace mkvlab
