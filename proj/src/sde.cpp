#include "mkvlab/sde.hpp"

#include "mkvlab/parallel.hpp"
#include "mkvlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

namespace mkvlab {

MeasureFlow MeasureFlow::constant(const EmpiricalMeasure& mu, double s, double T, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("MeasureFlow::constant: n_steps must be >= 1");
  MeasureFlow f;
  for (int m = 0; m <= n_steps; ++m) {
    f.times.push_back(m == n_steps ? T : s + (T - s) * m / n_steps);
    f.nodes.push_back(mu);
  }
  return f;
}

void MeasureFlow::require_same_grid(const MeasureFlow& other) const {
  if (times.size() != other.times.size())
    throw std::invalid_argument("flow grids differ in length: " + std::to_string(times.size()) +
                                " vs " + std::to_string(other.times.size()));
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - other.times[i]) > 1e-12)
      throw std::invalid_argument("flow grids differ at node " + std::to_string(i));
}

void MeasureFlow::write_csv(const std::filesystem::path& dir, const std::string& prefix) const {
  std::filesystem::create_directories(dir);
  std::ofstream grid(dir / (prefix + "_times.csv"));
  grid << "node,t\n";
  grid.precision(17);
  for (std::size_t i = 0; i < times.size(); ++i) {
    grid << i << ',' << times[i] << '\n';
    nodes[i].write_csv(dir / (prefix + "_" + std::to_string(i) + ".csv"));
  }
}

PathEnsemble::PathEnsemble(std::vector<double> times, long long n_paths, int dim,
                           std::uint64_t seed, std::string initial_description)
    : times_(std::move(times)),
      n_paths_(n_paths),
      dim_(dim),
      seed_(seed),
      initial_(std::move(initial_description)) {
  data_.assign(times_.size() * static_cast<std::size_t>(n_paths_) * static_cast<std::size_t>(dim_),
               0.0);
  sup_.assign(static_cast<std::size_t>(n_paths_), 0.0);
}

EmpiricalMeasure PathEnsemble::marginal_at(std::size_t record) const {
  if (record >= times_.size()) throw std::out_of_range("record index out of range");
  EmpiricalMeasure::Points pts(n_paths_, dim_);
  std::memcpy(pts.data(), state(record, 0),
              sizeof(double) * static_cast<std::size_t>(n_paths_) * static_cast<std::size_t>(dim_));
  return EmpiricalMeasure::uniform(std::move(pts));
}

void PathEnsemble::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "path,t";
  for (int c = 0; c < dim_; ++c) out << ",x" << c + 1;
  out << '\n';
  for (long long p = 0; p < n_paths_; ++p) {
    for (std::size_t r = 0; r < times_.size(); ++r) {
      out << p << ',' << times_[r];
      const double* x = state(r, p);
      for (int c = 0; c < dim_; ++c) out << ',' << x[c];
      out << '\n';
    }
  }
}

namespace {
constexpr char kMagic[8] = {'M', 'K', 'V', 'P', 'A', 'T', 'H', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated path dump");
  return v;
}
}  // namespace

void PathEnsemble::write_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::int64_t>(out, n_paths_);
  put<std::int64_t>(out, static_cast<std::int64_t>(times_.size()));
  put<std::int32_t>(out, dim_);
  put<std::int32_t>(out, n_steps_);
  put<std::uint64_t>(out, seed_);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(initial_.size()));
  out.write(initial_.data(), static_cast<std::streamsize>(initial_.size()));
  out.write(reinterpret_cast<const char*>(times_.data()),
            static_cast<std::streamsize>(times_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(sup_.data()),
            static_cast<std::streamsize>(sup_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(data_.data()),
            static_cast<std::streamsize>(data_.size() * sizeof(double)));
}

PathEnsemble PathEnsemble::read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + " is not a path dump");
  const auto n_paths = get<std::int64_t>(in);
  const auto n_records = get<std::int64_t>(in);
  const auto dim = get<std::int32_t>(in);
  const auto n_steps = get<std::int32_t>(in);
  const auto seed = get<std::uint64_t>(in);
  std::string initial(get<std::uint32_t>(in), '\0');
  in.read(initial.data(), static_cast<std::streamsize>(initial.size()));
  std::vector<double> times(static_cast<std::size_t>(n_records));
  in.read(reinterpret_cast<char*>(times.data()),
          static_cast<std::streamsize>(times.size() * sizeof(double)));
  PathEnsemble e(std::move(times), n_paths, dim, seed, std::move(initial));
  e.n_steps_ = n_steps;
  e.dt_ = n_steps > 0 ? (e.times_.back() - e.times_.front()) / n_steps : 0.0;
  in.read(reinterpret_cast<char*>(e.sup_.data()),
          static_cast<std::streamsize>(e.sup_.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(e.data_.data()),
          static_cast<std::streamsize>(e.data_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated path dump " + path.string());
  return e;
}

namespace {

bool is_diagonal(const Mat& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j && a(i, j) != 0.0) return false;
  return true;
}

/// sigma = sqrt(2a), with the diagonal case done entrywise.
Mat sigma_of(const Mat& a) {
  if (is_diagonal(a)) {
    Mat s = Mat::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (!(a(i, i) > 0.0)) return sqrt_spd(Mat(2.0 * a));  // throws with the eigenvalue
      s(i, i) = std::sqrt(2.0 * a(i, i));
    }
    return s;
  }
  return sqrt_spd(Mat(2.0 * a));
}

struct PathRng {
  PathStream stream;
  std::normal_distribution<double> normal;
};

std::string describe(const EmpiricalMeasure& mu) {
  std::ostringstream s;
  if (mu.size() == 1) {
    s << "dirac(";
    for (Eigen::Index c = 0; c < mu.dim(); ++c) s << (c ? "," : "") << mu.points()(0, c);
    s << ")";
  } else {
    s << "empirical(" << mu.size() << " atoms, d=" << mu.dim() << ")";
  }
  return s.str();
}

constexpr double kDriftLimit = 1e6;

EmpiricalMeasure sample_initial(const EmpiricalMeasure& initial, long long N, std::uint64_t seed,
                                bool* drawn) {
  *drawn = false;
  const double w0 = initial.weight(0);
  bool enumerate = initial.size() == N;
  for (Eigen::Index i = 1; enumerate && i < initial.size(); ++i) enumerate = initial.weight(i) == w0;
  if (enumerate) return initial;
  EmpiricalMeasure::Points x(N, initial.dim());
  if (initial.size() == 1) {
    for (long long i = 0; i < N; ++i) x.row(i) = initial.points().row(0);
    return EmpiricalMeasure::uniform(std::move(x));
  }
  *drawn = true;
  std::vector<double> cdf(static_cast<std::size_t>(initial.size()));
  double acc = 0.0;
  for (Eigen::Index a = 0; a < initial.size(); ++a)
    cdf[static_cast<std::size_t>(a)] = acc += initial.weight(a);
  for (long long i = 0; i < N; ++i) {
    PathStream stream(seed, static_cast<std::uint64_t>(i));
    const double u = static_cast<double>(stream() >> 11) * 0x1.0p-53 * acc;
    auto pos = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    pos = std::min<std::ptrdiff_t>(pos, initial.size() - 1);
    x.row(i) = initial.points().row(pos);
  }
  return EmpiricalMeasure::uniform(std::move(x));
}

}  // namespace

EmpiricalMeasure sample_initial(const EmpiricalMeasure& initial, long long n_paths,
                                std::uint64_t seed) {
  bool drawn = false;
  return sample_initial(initial, n_paths, seed, &drawn);
}

PathEnsemble simulate(const DiffusionSpec& spec, const EmpiricalMeasure& initial,
                      const SimulationOptions& options, bool interacting, MeasureFlow* flow_out) {
  if (!spec.field) throw std::invalid_argument("simulate: no coefficient field");
  if (options.n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
  if (options.n_paths < 1) throw std::invalid_argument("simulate: N must be >= 1");
  if (options.record_stride < 1) throw std::invalid_argument("simulate: record_stride must be >= 1");
  if (!(spec.s >= 0.0 && spec.s < spec.T)) throw std::invalid_argument("simulate: need 0 <= s < T");
  const CoefficientField& field = *spec.field;
  const int d = field.dim();
  if (initial.dim() != d)
    throw std::invalid_argument("simulate: initial law has dimension " +
                                std::to_string(initial.dim()) + ", field has " + std::to_string(d));
  const int n_steps = options.n_steps;
  const long long N = options.n_paths;
  if (spec.frozen_flow) {
    if (static_cast<int>(spec.frozen_flow->size()) != n_steps + 1)
      throw std::invalid_argument("simulate: frozen flow has " +
                                  std::to_string(spec.frozen_flow->size()) + " nodes, grid has " +
                                  std::to_string(n_steps + 1));
  }
  if (field.measure_dependent() && !interacting && !spec.frozen_flow)
    throw std::invalid_argument("simulate: field '" + field.name() +
                                "' depends on the law; supply a flow or use the particle system");

  const double dt = (spec.T - spec.s) / n_steps;
  const double sqrt_dt = std::sqrt(dt);
  auto grid_time = [&](int m) { return m == n_steps ? spec.T : spec.s + dt * m; };

  std::vector<int> recorded;
  if (options.record_steps.empty()) {
    for (int m = 0; m <= n_steps; m += options.record_stride) recorded.push_back(m);
  } else {
    recorded = options.record_steps;
    recorded.push_back(0);
    for (int m : recorded)
      if (m < 0 || m > n_steps)
        throw std::invalid_argument("simulate: record step " + std::to_string(m) + " off the grid");
    std::sort(recorded.begin(), recorded.end());
    recorded.erase(std::unique(recorded.begin(), recorded.end()), recorded.end());
  }
  if (recorded.back() != n_steps) recorded.push_back(n_steps);
  std::vector<double> times;
  for (int m : recorded) times.push_back(grid_time(m));

  PathEnsemble ens(times, N, d, options.seed, describe(initial));
  ens.n_steps_ = n_steps;
  ens.dt_ = dt;

  std::vector<PathRng> rngs;
  rngs.reserve(static_cast<std::size_t>(N));
  for (long long i = 0; i < N; ++i)
    rngs.push_back({PathStream(options.seed, static_cast<std::uint64_t>(i)), {}});

  bool drawn = false;
  EmpiricalMeasure::Points x = sample_initial(initial, N, options.seed, &drawn).points();
  if (drawn)
    for (auto& r : rngs) r.stream();

  auto& sup = ens.sup_;
  auto record = [&](std::size_t r) {
    std::memcpy(ens.state(r, 0), x.data(), sizeof(double) * static_cast<std::size_t>(N * d));
  };
  for (long long i = 0; i < N; ++i) sup[static_cast<std::size_t>(i)] = x.row(i).norm();
  record(0);
  if (flow_out) {
    flow_out->times.clear();
    flow_out->nodes.clear();
    flow_out->times.push_back(times[0]);
    flow_out->nodes.push_back(ens.marginal_at(0));
  }

  std::size_t next_record = 1;
  const int threads = std::max(1, options.threads);
  for (int m = 0; m < n_steps; ++m) {
    const double t = grid_time(m);
    const double t_eval = field.time_singular() ? t + 0.5 * dt : t;
    std::optional<EmpiricalMeasure> cloud;
    const EmpiricalMeasure* mu = nullptr;
    if (spec.frozen_flow) {
      mu = &spec.frozen_flow->at(static_cast<std::size_t>(m));
    } else if (interacting) {
      cloud.emplace(EmpiricalMeasure::uniform(x));
      mu = &*cloud;
    }
    const auto frozen = field.freeze(t_eval, mu);
    std::optional<Mat> shared_sigma;
    if (frozen->constant_diffusion()) shared_sigma = sigma_of(frozen->diffusion(Vec::Zero(d)));

    // Failures are reported for the lowest failing path so the message does
    // not depend on the thread count.
    std::vector<long long> failed_path(static_cast<std::size_t>(threads),
                                       std::numeric_limits<long long>::max());
    std::vector<std::string> failed_what(static_cast<std::size_t>(threads));
    const std::size_t chunk = (static_cast<std::size_t>(N) + threads - 1) / threads;
    parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t begin, std::size_t end) {
      const std::size_t slot = begin / std::max<std::size_t>(chunk, 1);
      Vec xi(d), state(d);
      for (std::size_t i = begin; i < end; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        state = x.row(row).transpose();
        const Vec b = frozen->drift(state);
        const double bn = b.norm();
        if (!(bn <= kDriftLimit)) {
          failed_path[slot] = static_cast<long long>(i);
          failed_what[slot] = std::isfinite(bn) ? "drift magnitude " + std::to_string(bn) +
                                                      " exceeds 1e6"
                                                : "drift is not finite";
          return;
        }
        auto& rng = rngs[i];
        for (int c = 0; c < d; ++c) xi(c) = rng.normal(rng.stream);
        if (shared_sigma) {
          state += b * dt + (*shared_sigma) * xi * sqrt_dt;
        } else {
          state += b * dt + sigma_of(frozen->diffusion(state)) * xi * sqrt_dt;
        }
        if (!state.allFinite()) {
          failed_path[slot] = static_cast<long long>(i);
          failed_what[slot] = "state is not finite";
          return;
        }
        x.row(row) = state.transpose();
        sup[i] = std::max(sup[i], state.norm());
      }
    });
    const auto worst = std::min_element(failed_path.begin(), failed_path.end());
    if (*worst != std::numeric_limits<long long>::max()) {
      const auto& what = failed_what[static_cast<std::size_t>(worst - failed_path.begin())];
      throw SimulationError("simulation aborted: " + what + " on path " + std::to_string(*worst) +
                                " at step " + std::to_string(m + 1) + " (t = " +
                                std::to_string(grid_time(m + 1)) + ")",
                            *worst, m + 1);
    }
    if (next_record < recorded.size() && recorded[next_record] == m + 1) {
      record(next_record);
      if (flow_out) {
        flow_out->times.push_back(times[next_record]);
        flow_out->nodes.push_back(ens.marginal_at(next_record));
      }
      ++next_record;
    }
  }
  return ens;
}

PathEnsemble euler_maruyama(const DiffusionSpec& spec, const EmpiricalMeasure& initial,
                            const SimulationOptions& options) {
  return simulate(spec, initial, options, false, nullptr);
}

EmpiricalMeasure marginal_law(const PathEnsemble& ensemble, double t, std::string* warning) {
  const auto& times = ensemble.times();
  if (times.empty()) throw std::out_of_range("marginal_law: empty ensemble");
  const double tol = 1e-12 * std::max(1.0, std::abs(times.back()));
  if (t < times.front() - tol || t > times.back() + tol)
    throw std::out_of_range("marginal_law: t = " + std::to_string(t) + " outside [" +
                            std::to_string(times.front()) + ", " + std::to_string(times.back()) +
                            "]");
  std::size_t best = 0;
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs(times[i] - t) < std::abs(times[best] - t)) best = i;
  if (warning && std::abs(times[best] - t) > tol) {
    *warning = "t = " + std::to_string(t) + " is not a recorded node; snapped to " +
               std::to_string(times[best]);
  }
  return ensemble.marginal_at(best);
}

double moment_sup_estimate(const PathEnsemble& ensemble, double k) {
  if (!(k >= 1.0)) throw std::invalid_argument("moment_sup_estimate: k must be >= 1");
  const auto& sup = ensemble.running_sup();
  double acc = 0.0;
  for (double s : sup) acc += std::pow(s, k);
  return acc / static_cast<double>(sup.size());
}

}  // namespace mkvlab
