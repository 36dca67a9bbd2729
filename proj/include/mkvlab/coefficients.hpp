#pragma once

#include "mkvlab/measure.hpp"
#include "mkvlab/psi_modulus.hpp"
#include "mkvlab/rng.hpp"
#include "mkvlab/types.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mkvlab {

struct FieldMetadata {
  double alpha = 1.0;  ///< Hoelder exponent of a in x
  double K = 0.0;
  std::function<double(double)> rho = [](double) { return 0.0; };
  PsiModulus psi = PsiModulus::linear();
  double k = 2.0;
};

/// Coefficients evaluated at one (t, mu). Built once per time step so that any
/// integral against mu is computed once and shared by every particle.
class FrozenCoefficients {
 public:
  virtual ~FrozenCoefficients() = default;
  virtual Vec drift(const Vec& x) const = 0;
  virtual Mat diffusion(const Vec& x) const = 0;
  /// a does not depend on x at this (t, mu).
  virtual bool constant_diffusion() const { return false; }
};

/// Drift b = b0 + b1 and diffusion matrix a (sigma = sqrt(2a)), possibly
/// depending on a law mu. Implementations hold no mutable state, so one field
/// may be evaluated from many threads. `mu` is null for measure-free calls.
class CoefficientField {
 public:
  virtual ~CoefficientField() = default;

  virtual int dim() const = 0;
  virtual bool measure_dependent() const = 0;
  /// Drift is evaluated at step midpoints.
  virtual bool time_singular() const { return false; }
  virtual std::string name() const = 0;

  virtual Vec drift0(double t, const Vec& x, const EmpiricalMeasure* mu) const = 0;
  virtual Vec drift1(double t, const Vec& x, const EmpiricalMeasure* mu) const = 0;
  virtual Mat diffusion(double t, const Vec& x, const EmpiricalMeasure* mu) const = 0;

  Vec drift(double t, const Vec& x, const EmpiricalMeasure* mu) const {
    return drift0(t, x, mu) + drift1(t, x, mu);
  }

  /// `mu` must outlive the returned object.
  virtual std::unique_ptr<FrozenCoefficients> freeze(double t, const EmpiricalMeasure* mu) const;

  const FieldMetadata& metadata() const noexcept { return meta_; }
  void set_metadata(FieldMetadata meta) { meta_ = std::move(meta); }

 protected:
  FieldMetadata meta_;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

/// b(x) = B x + c, constant a. No measure dependence.
class LinearField : public CoefficientField {
 public:
  LinearField(Mat B, Vec c, Mat a);

  int dim() const override { return static_cast<int>(c_.size()); }
  bool measure_dependent() const override { return false; }
  std::string name() const override { return "frozen"; }
  Vec drift0(double, const Vec& x, const EmpiricalMeasure*) const override;
  Vec drift1(double, const Vec& x, const EmpiricalMeasure*) const override;
  Mat diffusion(double, const Vec&, const EmpiricalMeasure*) const override { return a_; }
  std::unique_ptr<FrozenCoefficients> freeze(double t, const EmpiricalMeasure* mu) const override;

  const Mat& B() const { return B_; }
  const Vec& c() const { return c_; }
  const Mat& a() const { return a_; }

 private:
  Mat B_;
  Vec c_;
  Mat a_;
};

/// b(x, mu) = -theta (x - mean(mu)), a = scale I.
class MeanFieldOu : public CoefficientField {
 public:
  MeanFieldOu(int dim, double theta = 1.0, double scale = 1.0);

  int dim() const override { return dim_; }
  bool measure_dependent() const override { return true; }
  std::string name() const override { return "mean_field_ou"; }
  Vec drift0(double, const Vec& x, const EmpiricalMeasure*) const override;
  Vec drift1(double, const Vec& x, const EmpiricalMeasure* mu) const override;
  Mat diffusion(double, const Vec&, const EmpiricalMeasure*) const override;
  std::unique_ptr<FrozenCoefficients> freeze(double t, const EmpiricalMeasure* mu) const override;

  double theta() const { return theta_; }
  double scale() const { return scale_; }

 private:
  int dim_;
  double theta_;
  double scale_;
};

/// Kernels of the integral-type family
///   b(t, x, mu) = b0(t, x) + int b_tilde(t, x, y) mu(dy)
///   a(t, x, mu) = (lambda I + int sigma_tilde sigma_tilde^T (t, x, y) mu(dy)) / 2.
struct ExaKernels {
  int dim = 1;
  double lambda = 1.0;
  std::function<Vec(double, const Vec&)> b0;
  std::function<Vec(double, const Vec&, const Vec&)> b_tilde;
  std::function<Mat(double, const Vec&, const Vec&)> sigma_tilde;
  double K = 0.0;
  double sigma_bound = 0.0;
  PsiModulus psi = PsiModulus::linear();
  /// Parts of the drift assigned to b1; when false the integral term joins b0.
  bool b_tilde_lipschitz = true;
};

/// General assembly; O(atoms) work per evaluation.
FieldPtr assemble_exa(const ExaKernels& kernels);

/// Parametric member of the family with separable kernels:
///   b_tilde(x, y)     = -kappa x + kappa_y psi(|y|) e1
///   sigma_tilde(x, y) = kappa_sigma min(psi(|y|), 1) I
///   b0 in {0, -kappa0 x, -c x |x|^{-1-gamma}}.
struct ExaParams {
  enum class B0 { zero, linear, singular };
  int dim = 1;
  double lambda = 2.0;
  double kappa = 1.0;
  double kappa_y = 0.5;
  double kappa_sigma = 0.5;
  PsiModulus psi = PsiModulus::power(0.5);
  B0 b0 = B0::zero;
  double b0_c = 0.0;
  double b0_gamma = 0.5;
};

/// Same field as assemble_exa(exa_kernels(p)) with the mu-integrals reduced to
/// two scalar moments per step.
FieldPtr make_exa_field(const ExaParams& p);
ExaKernels exa_kernels(const ExaParams& p);

/// b + eps u and a + eps S for a constant vector u and symmetric S.
FieldPtr perturb(FieldPtr base, double eps, const Vec& u, const Mat& S);

/// Field from closures; `measure_dependent` and `time_singular` as declared.
struct LambdaSpec {
  int dim = 1;
  bool measure_dependent = false;
  bool time_singular = false;
  std::string name = "custom";
  std::function<Vec(double, const Vec&, const EmpiricalMeasure*)> drift0;
  std::function<Vec(double, const Vec&, const EmpiricalMeasure*)> drift1;
  std::function<Mat(double, const Vec&, const EmpiricalMeasure*)> diffusion;
};
FieldPtr make_lambda_field(LambdaSpec spec, FieldMetadata meta = {});

/// Builds a field from {"family": "frozen" | "mean_field_ou" | "exa", ...}.
/// Errors name the offending key.
FieldPtr field_from_json(const nlohmann::json& j);

/// Symmetric square root by eigendecomposition. Throws std::domain_error when
/// m is not symmetric within 1e-10 or its smallest eigenvalue is not above
/// 1e-14 max(1, largest eigenvalue).
Mat sqrt_spd(const Mat& m);
Eigen::MatrixXd sqrt_spd(const Eigen::MatrixXd& m);

/// p, q > 2 and d/p + 2/q < 1.
bool scr_k_membership(double p, double q, int d);

struct M0Result {
  double value = 0.0;
  double closed_form = 0.0;
  double bisection = 0.0;
};

/// Infimum of m > 1 with (m-1)p/m > 1, (m-1)q/m > 1 and
/// d m/(p(m-1)) + 2m/(q(m-1)) < 2, by closed form and by bisection on the
/// predicate. Throws std::logic_error if the two disagree beyond 1e-9.
M0Result compute_m0(double p0, double q0, int d);

struct LpqNorm {
  double value = 0.0;
  int spatial_cells = 0;  ///< cells per axis over [-1, 1]^d
  int time_nodes = 0;
  std::size_t centers = 0;
};

using SpaceTimeFunction = std::function<double(double, const Eigen::VectorXd&)>;

/// Approximates sup_z (int_s^t ||1_{B(z,1)} f_r||_{L^p}^q dr)^{1/q}: midpoint
/// rule on cells of [-1, 1]^d whose centres lie in the unit ball, trapezoid
/// rule in time, maximum over `centers`. spatial_cells = 0 picks 400, 200, 64
/// or 16 per axis for d = 1, 2, 3, > 3.
LpqNorm tilde_lpq_norm(const SpaceTimeFunction& f, double p, double q, double s, double t,
                       const std::vector<Eigen::VectorXd>& centers, int spatial_cells = 0,
                       int time_nodes = 101);

using MatrixField = std::function<Mat(const Vec&)>;

/// (div a)_i = sum_j d_j a_ij by central differences; default h = 1e-4 (1 + |x|).
Vec divergence(const MatrixField& a, const Vec& x, std::optional<double> h = std::nullopt);

struct AssumptionReport {
  std::string predicate;
  bool passed = true;
  double measured_constant = 0.0;
  double declared_constant = 0.0;
  std::string sample_description;

  nlohmann::json to_json() const;
};

using MeasurePairSampler = std::function<std::pair<EmpiricalMeasure, EmpiricalMeasure>(PathStream&)>;

struct LipschitzCheckOptions {
  int n_pairs = 50;
  std::vector<double> t_grid{0.0, 0.5, 1.0};
  std::vector<Eigen::VectorXd> x_grid;  ///< empty: 9 points on [-2, 2] along e1
  std::uint64_t seed = 1;
  double slack = 1.05;
};

struct LipschitzCheck {
  AssumptionReport diffusion;   ///< sup_x ||a(x, g) - a(x, g~)|| / D against K
  AssumptionReport divergence;  ///< sup_x |div a(x, g) - div a(x, g~)| / D against K
  AssumptionReport drift;       ///< sup_x |b(x, g) - b(x, g~)| / (rho_t D) against 1
  int skipped = 0;              ///< pairs with D = 0
};

/// Empirical measure-Lipschitz constants with D = (W_psi + W_k)(g, g~) computed
/// exactly, psi and k taken from the field metadata. Operator norm for a.
LipschitzCheck check_measure_lipschitz(const CoefficientField& field,
                                       const MeasurePairSampler& sampler,
                                       const LipschitzCheckOptions& options = {});

/// Random pairs of uniform measures with 2..max_atoms atoms in [-box, box]^d.
MeasurePairSampler random_atom_pairs(int dim, int max_atoms = 8, double box = 2.0);

}  // namespace mkvlab
