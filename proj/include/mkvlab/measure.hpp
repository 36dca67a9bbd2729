#pragma once

#include "mkvlab/psi_modulus.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mkvlab {

/// A probability law on R^d represented by weighted atoms.
class EmpiricalMeasure {
 public:
  using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Validates: n >= 1, finite points, nonnegative weights summing to 1
  /// within 1e-12.
  EmpiricalMeasure(Points points, Eigen::VectorXd weights);

  static EmpiricalMeasure uniform(Points points);
  static EmpiricalMeasure dirac(const Eigen::VectorXd& x);
  /// One-dimensional convenience; empty weights means uniform.
  static EmpiricalMeasure on_line(const std::vector<double>& xs,
                                  const std::vector<double>& weights = {});

  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  const Points& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }
  double weight(Eigen::Index i) const { return weights_(i); }

  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;
  /// Integral of |x|^k.
  double moment(double k) const;
  /// Integral of psi(|x|).
  double psi_moment(const PsiModulus& psi) const;

  /// Merges atoms closer than `tol` in max-norm (after lexicographic sorting)
  /// and, unless `keep_zero`, drops zero-weight atoms.
  EmpiricalMeasure merged(double tol = 1e-12, bool keep_zero = false) const;

  /// Deterministic stratified subsample of `m` atoms (index j is drawn from
  /// the j-th block of m equal index blocks, offset by the seed), returned with
  /// uniform weights. Returns the measure unchanged when m >= size().
  EmpiricalMeasure stratified_subsample(Eigen::Index m, std::uint64_t seed) const;
  /// Same selection rule but returns the chosen indices.
  static std::vector<Eigen::Index> stratified_indices(Eigen::Index n, Eigen::Index m,
                                                      std::uint64_t seed);

  nlohmann::json to_json() const;
  static EmpiricalMeasure from_json(const nlohmann::json& j);

  /// CSV: header `weight,x1,...,xd`, one row per atom.
  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
  static EmpiricalMeasure read_csv(const std::filesystem::path& path);
  static EmpiricalMeasure parse_csv(const std::string& text);

 private:
  Points points_;
  Eigen::VectorXd weights_;
};

/// True when both measures assign the same mass (within tol) to the same
/// atoms (within tol) after merging duplicates.
bool same_law(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double tol = 1e-12);

/// Compensated sum.
double stable_sum(const Eigen::VectorXd& v);

}  // namespace mkvlab
