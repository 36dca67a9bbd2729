#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace mkvlab {

/// A concave nondecreasing modulus psi: [0, inf) -> [0, inf) with psi(r) > 0
/// for r > 0. Families: r^alpha, r, a positive constant, a log-reciprocal
/// modulus (log(e^{beta+1} + 1/r))^{-beta}, and piecewise-linear tables.
class PsiModulus {
 public:
  enum class Family { power, linear, constant, log_reciprocal, tabulated };

  static PsiModulus power(double alpha);
  static PsiModulus linear();
  static PsiModulus constant(double c);
  static PsiModulus log_reciprocal(double beta);
  /// Knots (r, psi(r)) must start at r = 0, be strictly increasing in r,
  /// nondecreasing in value and have nonincreasing slopes.
  static PsiModulus tabulated(std::vector<std::pair<double, double>> knots);

  static PsiModulus from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// psi(r). Throws std::domain_error for r < 0 or NaN.
  double operator()(double r) const;

  Family family() const noexcept { return family_; }
  const std::string& description() const noexcept { return description_; }
  /// Family parameter: alpha, c or beta; 0 for linear and tabulated.
  double parameter() const noexcept { return param_; }
  const std::vector<std::pair<double, double>>& knots() const noexcept { return knots_; }

  /// psi(0+), the jump a psi-continuous function may make between nearby points.
  double at_zero() const;

 private:
  PsiModulus(Family family, double param, std::string description)
      : family_(family), param_(param), description_(std::move(description)) {}

  Family family_;
  double param_ = 0.0;
  double log_offset_ = 0.0;
  std::string description_;
  std::vector<std::pair<double, double>> knots_;
};

std::string to_string(PsiModulus::Family family);

inline double eval(const PsiModulus& psi, double r) { return psi(r); }

struct IntegralVerdict {
  double value = 0.0;           ///< integral from the requested cutoff to 1
  double limit_estimate = 0.0;  ///< cutoff -> 0 extrapolation, +inf when divergent
  bool diverges = false;
  std::vector<double> decade_increments;  ///< contributions of [1e-(j+1), 1e-j], j = 1..7
};

/// Integral of psi(s)/s over [cutoff, 1] and a divergence verdict from how the
/// per-decade contributions decay over cutoffs 1e-1 .. 1e-8.
IntegralVerdict dini_integral(const PsiModulus& psi, double lower_cutoff);

/// Same with integrand psi(s)^2/s.
IntegralVerdict square_dini_integral(const PsiModulus& psi, double lower_cutoff);

/// True iff psi(r)^2 log(1 + 1/r) decreases along r = 10^-n, n = 1..12, and the
/// last value is below 1e-3 times the first.
bool log_vanishing_check(const PsiModulus& psi);

struct SampledValue {
  Eigen::VectorXd point;
  double value = 0.0;
};

/// Discrete psi-continuity modulus: max over distinct pairs of
/// |f(x) - f(y)| / psi(|x - y|).
double continuity_modulus(const std::vector<SampledValue>& samples, const PsiModulus& psi);

}  // namespace mkvlab
