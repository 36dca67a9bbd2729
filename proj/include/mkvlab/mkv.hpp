#pragma once

#include "mkvlab/coefficients.hpp"
#include "mkvlab/psi_modulus.hpp"
#include "mkvlab/sde.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mkvlab {

struct ParticleResult {
  PathEnsemble paths;
  MeasureFlow flow;
};

/// N interacting particles: at every step the law argument is the empirical
/// law of the particles. Same seeding rules as euler_maruyama.
ParticleResult particle_simulate(FieldPtr field, const EmpiricalMeasure& initial, double T,
                                 const SimulationOptions& options);

/// Simulates with the law argument frozen along `input` and returns the
/// marginal flow on the same grid. `initial` must equal input.at(0) within
/// 1e-12; the grid must be uniform. Equal seeds give equal noise, so
/// successive Picard iterates share their Brownian increments.
MeasureFlow phi_map(FieldPtr field, const MeasureFlow& input, const EmpiricalMeasure& initial,
                    long long n_paths, std::uint64_t seed, int threads = 1);

struct RhoOptions {
  double lambda = 0.0;
  PsiModulus psi = PsiModulus::linear();
  double k = 2.0;
  /// Atoms per node measure for the W_psi transport problem.
  Eigen::Index subsample = 100;
  std::uint64_t subsample_seed = 0;
  int threads = 1;
};

struct RhoResult {
  double value = 0.0;
  double t_at_max = 0.0;
  std::vector<double> w_psi;  ///< per node
  std::vector<double> w_k;    ///< per node
  Eigen::Index subsample_size = 0;
};

/// max over nodes of e^{-lambda t} (W_psi + W_k). W_psi is exact transport on
/// stratified subsamples; W_k is exact in d = 1 (quantile coupling) and uses
/// the same subsamples otherwise.
RhoResult rho_lambda(const MeasureFlow& a, const MeasureFlow& b, const RhoOptions& options);

struct PicardOptions {
  long long n_paths = 1000;
  int n_steps = 100;
  double T = 1.0;
  std::uint64_t seed = 0;
  double tol = 1e-2;
  int max_iter = 10;
  int threads = 1;
  RhoOptions rho;
  /// Write a flow CSV directory per iteration here (every flow_csv_stride-th node).
  std::optional<std::filesystem::path> run_dir;
  int flow_csv_stride = 10;
};

struct PicardState {
  int iteration = 0;  ///< Phi applications after the first
  MeasureFlow flow;
  std::vector<double> history;  ///< history[n] = rho(flow_{n+1}, flow_n)
  std::vector<double> ratios;   ///< history[n+1] / history[n]
  double lambda = 0.0;
  std::string seed_policy;
  bool converged = false;
  bool non_contraction = false;
  Eigen::Index subsample_size = 0;

  nlohmann::json to_json() const;
  /// Iteration log picard.json under `dir`.
  void write(const std::filesystem::path& dir) const;
};

/// flow_0 is the constant flow at the N-point sample of `initial`, flow_{n+1}
/// = phi_map(flow_n) with one seed for every iterate. Stops once
/// rho(flow_{n+1}, flow_n) < tol with n >= 1, at max_iter, or when the
/// contraction ratio exceeds 1 three times in a row.
PicardState picard_solve(FieldPtr field, const EmpiricalMeasure& initial,
                         const PicardOptions& options);

struct LambdaSweep {
  std::vector<double> lambdas;
  std::vector<std::vector<double>> history;  ///< [lambda][iteration]
  std::vector<std::vector<double>> ratios;

  nlohmann::json to_json() const;
};

/// Runs `iterations` Picard steps once and evaluates rho_lambda for every
/// lambda on the same iterates.
LambdaSweep lambda_sweep(FieldPtr field, const EmpiricalMeasure& initial,
                         const PicardOptions& options, const std::vector<double>& lambdas,
                         int iterations);

}  // namespace mkvlab
