#include "mkvlab/mkv.hpp"

#include "mkvlab/distances.hpp"
#include "mkvlab/parallel.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mkvlab {

ParticleResult particle_simulate(FieldPtr field, const EmpiricalMeasure& initial, double T,
                                 const SimulationOptions& options) {
  ParticleResult out;
  DiffusionSpec spec{std::move(field), 0.0, T, nullptr};
  out.paths = simulate(spec, initial, options, true, &out.flow);
  return out;
}

MeasureFlow phi_map(FieldPtr field, const MeasureFlow& input, const EmpiricalMeasure& initial,
                    long long n_paths, std::uint64_t seed, int threads) {
  if (input.size() < 2) throw std::invalid_argument("phi_map: flow needs at least 2 nodes");
  const int n_steps = static_cast<int>(input.size()) - 1;
  const double s = input.times.front(), T = input.times.back();
  const double dt = (T - s) / n_steps;
  for (int m = 0; m <= n_steps; ++m)
    if (std::abs(input.times[static_cast<std::size_t>(m)] - (s + dt * m)) > 1e-9 * std::max(1.0, T))
      throw std::invalid_argument("phi_map: flow grid is not uniform at node " + std::to_string(m));
  if (!same_law(initial, input.at(0), 1e-12))
    throw std::invalid_argument("phi_map: initial law differs from the flow at time 0");
  DiffusionSpec spec{std::move(field), s, T, &input};
  SimulationOptions opts;
  opts.n_paths = n_paths;
  opts.n_steps = n_steps;
  opts.seed = seed;
  opts.threads = threads;
  MeasureFlow out;
  simulate(spec, initial, opts, false, &out);
  return out;
}

RhoResult rho_lambda(const MeasureFlow& a, const MeasureFlow& b, const RhoOptions& options) {
  a.require_same_grid(b);
  if (!(options.lambda >= 0.0)) throw std::invalid_argument("rho_lambda: lambda must be >= 0");
  const std::size_t n = a.size();
  RhoResult out;
  out.w_psi.assign(n, 0.0);
  out.w_k.assign(n, 0.0);
  std::vector<Eigen::Index> sub(n, 0);
  OtOptions ot;
  ot.max_lp_cells = 1'000'000;
  parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& mu = a.at(i);
      const auto& nu = b.at(i);
      const auto ms = mu.stratified_subsample(options.subsample, options.subsample_seed);
      const auto ns = nu.stratified_subsample(options.subsample, options.subsample_seed);
      sub[i] = std::max(ms.size(), ns.size());
      out.w_psi[i] = w_psi_primal(ms, ns, options.psi, ot).value;
      out.w_k[i] = mu.dim() == 1
                       ? wasserstein_k(mu, nu, options.k, OtMethod::quantile_1d).value
                       : wasserstein_k(ms, ns, options.k, OtMethod::exact_lp, ot).value;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::exp(-options.lambda * a.times[i]) * (out.w_psi[i] + out.w_k[i]);
    if (i == 0 || v > out.value) {
      out.value = v;
      out.t_at_max = a.times[i];
    }
    out.subsample_size = std::max(out.subsample_size, sub[i]);
  }
  return out;
}

nlohmann::json PicardState::to_json() const {
  return {{"iteration", iteration},
          {"lambda", lambda},
          {"history", history},
          {"ratios", ratios},
          {"converged", converged},
          {"non_contraction", non_contraction},
          {"seed_policy", seed_policy},
          {"subsample_size", subsample_size},
          {"grid", {{"t0", flow.times.front()}, {"T", flow.times.back()},
                    {"nodes", flow.size()}}}};
}

void PicardState::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "picard.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "picard.json").string());
  out << to_json().dump(2) << '\n';
}

namespace {

MeasureFlow thinned(const MeasureFlow& f, int stride) {
  MeasureFlow out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i % static_cast<std::size_t>(stride) == 0 || i + 1 == f.size()) {
      out.times.push_back(f.times[i]);
      out.nodes.push_back(f.nodes[i]);
    }
  }
  return out;
}

void dump_flow(const PicardOptions& options, const MeasureFlow& flow, int index) {
  if (!options.run_dir) return;
  thinned(flow, std::max(1, options.flow_csv_stride))
      .write_csv(*options.run_dir / ("flow_" + std::to_string(index)), "node");
}

}  // namespace

PicardState picard_solve(FieldPtr field, const EmpiricalMeasure& initial,
                         const PicardOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("picard_solve: tol must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("picard_solve: max_iter must be >= 1");
  const EmpiricalMeasure gamma = sample_initial(initial, options.n_paths, options.seed);
  PicardState state;
  state.lambda = options.rho.lambda;
  state.seed_policy = "common random numbers: seed " + std::to_string(options.seed) +
                      " for every iterate";
  MeasureFlow prev = MeasureFlow::constant(gamma, 0.0, options.T, options.n_steps);
  dump_flow(options, prev, 0);
  int above_one = 0;
  for (int n = 0;; ++n) {
    MeasureFlow next = phi_map(field, prev, gamma, options.n_paths, options.seed, options.threads);
    dump_flow(options, next, n + 1);
    const RhoResult r = rho_lambda(next, prev, options.rho);
    state.subsample_size = r.subsample_size;
    state.history.push_back(r.value);
    if (state.history.size() >= 2) {
      const double before = state.history[state.history.size() - 2];
      const double ratio = before > 0.0 ? r.value / before : (r.value > 0.0 ? INFINITY : 0.0);
      state.ratios.push_back(ratio);
      above_one = ratio > 1.0 ? above_one + 1 : 0;
    }
    state.iteration = n;
    prev = std::move(next);
    if (n >= 1 && r.value < options.tol) {
      state.converged = true;
      break;
    }
    if (above_one >= 3) {
      state.non_contraction = true;
      break;
    }
    if (n >= options.max_iter) break;
  }
  state.flow = std::move(prev);
  if (options.run_dir) state.write(*options.run_dir);
  return state;
}

nlohmann::json LambdaSweep::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    rows.push_back({{"lambda", lambdas[i]}, {"history", history[i]}, {"ratios", ratios[i]}});
  return rows;
}

LambdaSweep lambda_sweep(FieldPtr field, const EmpiricalMeasure& initial,
                         const PicardOptions& options, const std::vector<double>& lambdas,
                         int iterations) {
  if (iterations < 1) throw std::invalid_argument("lambda_sweep: iterations must be >= 1");
  LambdaSweep sweep;
  sweep.lambdas = lambdas;
  sweep.history.assign(lambdas.size(), {});
  sweep.ratios.assign(lambdas.size(), {});
  const EmpiricalMeasure gamma = sample_initial(initial, options.n_paths, options.seed);
  MeasureFlow prev = MeasureFlow::constant(gamma, 0.0, options.T, options.n_steps);
  for (int n = 0; n <= iterations; ++n) {
    MeasureFlow next = phi_map(field, prev, gamma, options.n_paths, options.seed, options.threads);
    // Distances for every lambda share the same per-node transport values.
    RhoOptions base = options.rho;
    base.lambda = 0.0;
    const RhoResult r = rho_lambda(next, prev, base);
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      double v = 0.0;
      for (std::size_t i = 0; i < next.size(); ++i)
        v = std::max(v, std::exp(-lambdas[l] * next.times[i]) * (r.w_psi[i] + r.w_k[i]));
      auto& h = sweep.history[l];
      if (!h.empty()) sweep.ratios[l].push_back(h.back() > 0.0 ? v / h.back() : 0.0);
      h.push_back(v);
    }
    prev = std::move(next);
  }
  return sweep;
}

}  // namespace mkvlab
