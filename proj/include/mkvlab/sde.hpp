#pragma once

#include "mkvlab/coefficients.hpp"
#include "mkvlab/measure.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkvlab {

/// One empirical law per node of a time grid.
struct MeasureFlow {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> nodes;

  std::size_t size() const { return times.size(); }
  const EmpiricalMeasure& at(std::size_t i) const { return nodes.at(i); }
  /// Constant flow equal to `mu` on a uniform grid of n_steps + 1 nodes over [s, T].
  static MeasureFlow constant(const EmpiricalMeasure& mu, double s, double T, int n_steps);
  /// Throws std::invalid_argument unless both flows have the same times within 1e-12.
  void require_same_grid(const MeasureFlow& other) const;
  /// Writes node i to dir/prefix_<i>.csv and the grid to dir/prefix_times.csv.
  void write_csv(const std::filesystem::path& dir, const std::string& prefix) const;
};

/// Blow-up or non-finite state. step() is the 1-based index of the step that
/// failed, path() the lowest failing path.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long long path, int step)
      : std::runtime_error(what), path_(path), step_(step) {}
  long long path() const noexcept { return path_; }
  int step() const noexcept { return step_; }

 private:
  long long path_;
  int step_;
};

struct DiffusionSpec {
  FieldPtr field;
  double s = 0.0;
  double T = 1.0;
  /// Law argument at each grid node (phi map). Must have n_steps + 1 nodes.
  /// When null the field is evaluated measure-free.
  const MeasureFlow* frozen_flow = nullptr;
};

struct SimulationOptions {
  long long n_paths = 1000;
  int n_steps = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Keep every record_stride-th grid node (the last node is always kept).
  int record_stride = 1;
  /// When non-empty, record exactly these step indices (plus 0 and n_steps)
  /// instead of using the stride.
  std::vector<int> record_steps;
};

/// Paths stored as [record][path][coordinate].
class PathEnsemble {
 public:
  PathEnsemble() = default;
  PathEnsemble(std::vector<double> times, long long n_paths, int dim, std::uint64_t seed,
               std::string initial_description);

  const std::vector<double>& times() const noexcept { return times_; }
  long long n_paths() const noexcept { return n_paths_; }
  int dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& initial_description() const noexcept { return initial_; }
  int n_steps() const noexcept { return n_steps_; }
  double step() const noexcept { return dt_; }

  double* state(std::size_t record, long long path) {
    return data_.data() + (record * static_cast<std::size_t>(n_paths_) + path) * dim_;
  }
  const double* state(std::size_t record, long long path) const {
    return data_.data() + (record * static_cast<std::size_t>(n_paths_) + path) * dim_;
  }
  /// sup over every grid node (recorded or not) of |X_t| for each path.
  const std::vector<double>& running_sup() const noexcept { return sup_; }
  std::vector<double>& running_sup() noexcept { return sup_; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Uniform empirical law of the states at record i.
  EmpiricalMeasure marginal_at(std::size_t record) const;

  void write_csv(const std::filesystem::path& path) const;
  void write_binary(const std::filesystem::path& path) const;
  static PathEnsemble read_binary(const std::filesystem::path& path);

 private:
  friend PathEnsemble simulate(const DiffusionSpec&, const EmpiricalMeasure&,
                               const SimulationOptions&, bool, MeasureFlow*);
  std::vector<double> times_;
  long long n_paths_ = 0;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  std::string initial_;
  int n_steps_ = 0;
  double dt_ = 0.0;
  std::vector<double> data_;
  std::vector<double> sup_;
};

/// Euler-Maruyama X_{m+1} = X_m + b dt + sqrt(2a) sqrt(dt) xi_m. Path i draws
/// from PathStream(seed, i); its start is atom i of `initial` when `initial`
/// has exactly n_paths equally weighted atoms, otherwise an atom drawn from
/// the stream. Throws SimulationError when |b| > 1e6 or the state is not finite.
PathEnsemble euler_maruyama(const DiffusionSpec& spec, const EmpiricalMeasure& initial,
                            const SimulationOptions& options);

/// Shared engine. With `interacting` the law argument at every step is the
/// empirical law of the current particles. `flow_out` (optional) receives the
/// marginal at every recorded node.
PathEnsemble simulate(const DiffusionSpec& spec, const EmpiricalMeasure& initial,
                      const SimulationOptions& options, bool interacting, MeasureFlow* flow_out);

/// The N starting points simulate() uses: `initial` itself when it has N
/// equally weighted atoms, N copies of a single atom, otherwise atom draws
/// from the first output of PathStream(seed, i).
EmpiricalMeasure sample_initial(const EmpiricalMeasure& initial, long long n_paths,
                                std::uint64_t seed);

/// Marginal at the recorded node nearest to t. `warning` receives a note when
/// t is not a grid node. Throws std::out_of_range for t outside [s, T].
EmpiricalMeasure marginal_law(const PathEnsemble& ensemble, double t,
                              std::string* warning = nullptr);

/// Monte Carlo mean of sup_t |X_t|^k.
double moment_sup_estimate(const PathEnsemble& ensemble, double k);

}  // namespace mkvlab
