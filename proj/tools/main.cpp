#include "mkvlab/distances.hpp"
#include "mkvlab/harness.hpp"
#include "mkvlab/mkv.hpp"
#include "mkvlab/sde.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mkvlab;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out_dir;
  std::optional<int> threads;
  std::optional<fs::path> config;
};

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

/// Reads `key` from the run config, with a fallback.
template <class T>
T setting(const json& cfg, const char* key, T fallback) {
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

EmpiricalMeasure initial_law(const json& cfg, const std::optional<fs::path>& csv, int dim) {
  if (csv) return EmpiricalMeasure::read_csv(*csv);
  if (cfg.contains("gamma")) {
    const auto& g = cfg.at("gamma");
    if (g.is_number()) return EmpiricalMeasure::on_line({g.get<double>()});
    if (g.is_array()) return EmpiricalMeasure::dirac(Eigen::Map<const Eigen::VectorXd>(
        g.get<std::vector<double>>().data(), static_cast<Eigen::Index>(g.size())));
    return EmpiricalMeasure::from_json(g);
  }
  return EmpiricalMeasure::dirac(Eigen::VectorXd::Zero(dim));
}

void print_report(const DistanceReport& r) { std::cout << r.to_json().dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mkvlab: McKean-Vlasov simulation and transport distances"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);

  // metric
  auto* metric = app.add_subcommand("metric", "Distance between two measure CSVs");
  std::string metric_name = "wk", method = "exact-LP", tv_mode = "atomic";
  fs::path mu_path, nu_path;
  double k = 2.0;
  std::string psi_json = R"({"family":"linear"})";
  metric->add_option("metric", metric_name, "wk | w_psi | w_psi_dual | tv | gaussian_w2 | kl")
      ->check(CLI::IsMember({"wk", "w_psi", "w_psi_dual", "tv", "gaussian_w2", "kl"}));
  metric->add_option("mu", mu_path)->required()->check(CLI::ExistingFile);
  metric->add_option("nu", nu_path)->required()->check(CLI::ExistingFile);
  metric->add_option("--method", method, "exact-LP | quantile-1d | sinkhorn");
  metric->add_option("-k", k, "Wasserstein order");
  metric->add_option("--psi", psi_json, "Modulus as JSON");
  metric->add_option("--tv-mode", tv_mode)->check(CLI::IsMember({"shared_support", "atomic", "histogram"}));

  // simulate
  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama for a measure-free field");
  std::optional<fs::path> initial_csv;
  std::string format = "csv";
  sim->add_option("--initial", initial_csv, "Initial law CSV")->check(CLI::ExistingFile);
  sim->add_option("--format", format)->check(CLI::IsMember({"csv", "binary"}));

  // mkv
  auto* mkv = app.add_subcommand("mkv", "Interacting particles or Picard iteration");
  std::string mode = "particle";
  mkv->add_option("mode", mode)->check(CLI::IsMember({"particle", "picard"}));
  mkv->add_option("--initial", initial_csv, "Initial law CSV")->check(CLI::ExistingFile);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a named experiment from --config");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = g.config ? load_json(*g.config) : json::object();
    const fs::path out = g.out_dir.value_or(setting<std::string>(cfg, "out_dir", "out"));
    const std::uint64_t seed = g.seed.value_or(setting<std::uint64_t>(cfg, "seed", 0));
    const int threads = g.threads.value_or(setting<int>(cfg, "threads", 1));

    if (*metric) {
      const auto mu = EmpiricalMeasure::read_csv(mu_path);
      const auto nu = EmpiricalMeasure::read_csv(nu_path);
      const auto psi = PsiModulus::from_json(json::parse(psi_json));
      if (metric_name == "wk") {
        print_report(wasserstein_k(mu, nu, k, ot_method_from_string(method)));
      } else if (metric_name == "w_psi") {
        print_report(w_psi_primal(mu, nu, psi));
      } else if (metric_name == "w_psi_dual") {
        print_report(w_psi_dual(mu, nu, psi));
      } else if (metric_name == "tv") {
        const TvMode m = tv_mode == "atomic"     ? TvMode::atomic
                         : tv_mode == "histogram" ? TvMode::histogram
                                                  : TvMode::shared_support;
        print_report(total_variation(mu, nu, {m, 0}));
      } else if (metric_name == "gaussian_w2") {
        std::cout << json{{"metric", "gaussian_W_2"},
                          {"value", gaussian_w2(mu.mean(), mu.covariance(), nu.mean(), nu.covariance())},
                          {"method", "closed-form"}}
                         .dump(2)
                  << '\n';
      } else {
        std::cout << json{{"metric", "KL"},
                          {"value", relative_entropy(mu, nu, EntropyMode::knn, 1)},
                          {"method", "knn"}}
                         .dump(2)
                  << '\n';
      }
      return 0;
    }

    if (*exp) {
      if (!g.config) throw std::invalid_argument("experiment needs --config");
      harness::RunOverrides o;
      o.out_dir = g.out_dir;
      o.seed = g.seed;
      o.threads = g.threads;
      return harness::run(*g.config, o, std::cout, std::cerr);
    }

    if (!cfg.contains("field")) throw std::invalid_argument("--config must provide a field");
    const FieldPtr field = field_from_json(cfg.at("field"));
    const EmpiricalMeasure gamma = initial_law(cfg, initial_csv, field->dim());
    const double T = setting<double>(cfg, "T", 1.0);
    SimulationOptions opts;
    opts.n_paths = setting<long long>(cfg, "N", 1000);
    opts.n_steps = setting<int>(cfg, "n_steps", 100);
    opts.record_stride = setting<int>(cfg, "record_stride", 1);
    opts.seed = seed;
    opts.threads = threads;
    fs::create_directories(out);

    if (*sim) {
      const auto ens = euler_maruyama(DiffusionSpec{field, 0.0, T, nullptr}, gamma, opts);
      const fs::path p = out / (format == "csv" ? "paths.csv" : "paths.bin");
      format == "csv" ? ens.write_csv(p) : ens.write_binary(p);
      ens.marginal_at(ens.times().size() - 1).write_csv(out / "marginal_T.csv");
      std::cout << "wrote " << p.string() << " and " << (out / "marginal_T.csv").string() << '\n';
      return 0;
    }

    if (mode == "particle") {
      const auto r = particle_simulate(field, gamma, T, opts);
      r.flow.write_csv(out / "flow", "node");
      r.paths.marginal_at(r.paths.times().size() - 1).write_csv(out / "marginal_T.csv");
      std::cout << "wrote " << (out / "flow").string() << '\n';
      return 0;
    }
    PicardOptions po;
    po.n_paths = opts.n_paths;
    po.n_steps = opts.n_steps;
    po.T = T;
    po.seed = seed;
    po.threads = threads;
    po.tol = setting<double>(cfg, "tol", 1e-2);
    po.max_iter = setting<int>(cfg, "max_iter", 10);
    po.rho.lambda = setting<double>(cfg, "lambda", 0.0);
    po.rho.k = setting<double>(cfg, "k", 2.0);
    po.rho.threads = threads;
    if (cfg.contains("psi")) po.rho.psi = PsiModulus::from_json(cfg.at("psi"));
    po.run_dir = out;
    const auto state = picard_solve(field, gamma, po);
    std::cout << state.to_json().dump(2) << '\n';
    return state.converged ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
