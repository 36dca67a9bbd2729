#pragma once

#include "mkvlab/coefficients.hpp"
#include "mkvlab/measure.hpp"
#include "mkvlab/psi_modulus.hpp"
#include "mkvlab/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkvlab::harness {

inline constexpr const char* kSchemaVersion = "1.0";

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& reason)
      : std::invalid_argument(path + ": " + reason), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct PerturbationFamily {
  std::string name;
  nlohmann::json field;  ///< base field spec
  std::optional<Vec> u;  ///< drift perturbation direction
  std::optional<Mat> S;  ///< diffusion perturbation
};

struct TiltGrid {
  double min = 0.05;
  double max = 10.0;
  double ratio = 1.1;
};

struct Bump {
  double center = 0.0;
  double width = 0.5;
  double floor = 0.1;
};

struct EntropyCheckConfig {
  nlohmann::json field;
  double x = 2.0;
  double y = 0.0;
  double t = 0.5;
  long long N = 10'000;
  int k = 1;
};

struct ExperimentConfig {
  std::string experiment;
  nlohmann::json raw;

  long long N = 10'000;
  int n_steps = 128;
  double T = 1.0;
  std::vector<std::uint64_t> seeds{1};
  double k = 2.0;
  PsiModulus psi = PsiModulus::power(0.5);
  std::vector<double> t_grid;
  int threads = 1;
  std::filesystem::path out_dir = "out";

  nlohmann::json field;
  std::optional<EmpiricalMeasure> gamma;
  std::optional<EmpiricalMeasure> gamma_tilde;

  // theorem1
  std::vector<PerturbationFamily> families;
  std::vector<double> epsilons;
  // theorem2
  std::vector<double> deltas;
  Eigen::Index w_psi_subsample = 100;
  // log_harnack
  TiltGrid tilts;
  std::vector<Bump> bumps;
  double max_rel_se = 0.05;
  std::optional<EntropyCheckConfig> entropy_check;

  /// Parses and validates; throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// FNV-1a 64 of the canonical (key-sorted, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Version string per module, embedded in every report.
nlohmann::json module_versions();

struct ScalingRow {
  std::string series;
  double t = 0.0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string method;
  std::optional<double> se;
};

struct SeriesFit {
  std::string series;
  double t = 0.0;
  stats::LinearFit fit;
  stats::Interval ci;
  int points = 0;
};

struct Criterion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ScalingReport {
  std::string experiment;
  std::string config_hash;
  nlohmann::json config;
  std::vector<ScalingRow> rows;
  std::vector<SeriesFit> fits;
  nlohmann::json noise_floor = nlohmann::json::array();
  std::vector<Criterion> criteria;
  std::vector<std::string> warnings;
  nlohmann::json extra = nlohmann::json::object();

  bool passed() const;
  nlohmann::json to_json() const;
  /// CSV with header t,epsilon,seed,lhs,rhs,method for one series.
  std::string rows_csv(const std::string& series) const;
  std::vector<std::string> series_names() const;
  /// Writes <experiment>_report.json and <experiment>_<series>.csv; returns the paths.
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const;
};

/// W_2-type distance between large marginals: quantile coupling in d = 1,
/// otherwise the mean of exact transport on 5 stratified 200-atom subsamples.
double marginal_wk(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double k,
                   std::string* method = nullptr);

ScalingReport exp_theorem1_perturbation(const ExperimentConfig& config);
ScalingReport exp_theorem2_stability(const ExperimentConfig& config);
ScalingReport exp_log_harnack(const ExperimentConfig& config);

ScalingReport run_experiment(const ExperimentConfig& config);

struct RunOverrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Loads the config, runs it, writes the reports and prints a summary.
/// Returns 0 on pass, 2 when a criterion fails, 1 on any error.
int run(const std::filesystem::path& config_path, const RunOverrides& overrides,
        std::ostream& out, std::ostream& err);

}  // namespace mkvlab::harness
