#include "mkvlab/harness.hpp"

#include "mkvlab/distances.hpp"
#include "mkvlab/mkv.hpp"
#include "mkvlab/quadrature.hpp"
#include "mkvlab/sde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace mkvlab::harness {

using nlohmann::json;

namespace {

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
  return x;
}

long long positive_integer(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (x != std::floor(x)) throw ConfigError(path, "expected an integer");
  if (x <= 0) throw ConfigError(path, "must be positive, got " + v.dump());
  return static_cast<long long>(x);
}

double positive(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (!(x > 0.0)) throw ConfigError(path, "must be positive, got " + v.dump());
  return x;
}

std::vector<double> increasing_positive(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(positive(v[i], index_path(path, i)));
    if (i > 0 && !(out[i] > out[i - 1]))
      throw ConfigError(index_path(path, i), "values must be strictly increasing");
  }
  return out;
}

Vec vector_value(const json& v, int d, const std::string& path) {
  Vec out(d);
  if (v.is_number()) {
    out.setConstant(number(v, path));
    return out;
  }
  if (!v.is_array() || static_cast<int>(v.size()) != d)
    throw ConfigError(path, "expected a number or " + std::to_string(d) + " numbers");
  for (int i = 0; i < d; ++i) out(i) = number(v[static_cast<std::size_t>(i)], index_path(path, static_cast<std::size_t>(i)));
  return out;
}

Mat matrix_value(const json& v, int d, const std::string& path) {
  if (v.is_number()) return number(v, path) * Mat::Identity(d, d);
  if (!v.is_array() || static_cast<int>(v.size()) != d)
    throw ConfigError(path, "expected a number or a " + std::to_string(d) + "x" + std::to_string(d) + " array");
  Mat m(d, d);
  for (int i = 0; i < d; ++i) {
    const auto row = vector_value(v[static_cast<std::size_t>(i)], d, index_path(path, static_cast<std::size_t>(i)));
    m.row(i) = row.transpose();
  }
  return m;
}

EmpiricalMeasure measure_value(const json& v, const std::string& path) {
  try {
    if (v.is_number()) return EmpiricalMeasure::on_line({v.get<double>()});
    if (v.is_array()) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i)) = number(v[i], index_path(path, i));
      return EmpiricalMeasure::dirac(x);
    }
    if (v.is_object() && v.contains("dirac")) return measure_value(v.at("dirac"), join_path(path, "dirac"));
    if (v.is_object() && v.contains("csv")) return EmpiricalMeasure::read_csv(v.at("csv").get<std::string>());
    return EmpiricalMeasure::from_json(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

int field_dim(const json& spec, const std::string& path) {
  try {
    return field_from_json(spec)->dim();
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

FieldPtr field_value(const json& spec, const std::string& path) {
  try {
    return field_from_json(spec);
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

const std::set<std::string> kExperiments{"theorem1", "theorem2", "log_harnack"};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("(root)", "expected a JSON object");
  ExperimentConfig c;
  c.raw = j;
  if (!j.contains("experiment")) throw ConfigError("experiment", "missing");
  if (!j.at("experiment").is_string()) throw ConfigError("experiment", "expected a string");
  c.experiment = j.at("experiment").get<std::string>();
  if (!kExperiments.count(c.experiment))
    throw ConfigError("experiment", "unknown experiment '" + c.experiment +
                                        "' (expected theorem1, theorem2 or log_harnack)");
  if (j.contains("N")) c.N = positive_integer(j.at("N"), "N");
  if (j.contains("n_steps")) c.n_steps = static_cast<int>(positive_integer(j.at("n_steps"), "n_steps"));
  if (j.contains("T")) c.T = positive(j.at("T"), "T");
  if (j.contains("k")) {
    c.k = number(j.at("k"), "k");
    if (c.k < 1.0) throw ConfigError("k", "must be >= 1");
  }
  if (j.contains("threads")) c.threads = static_cast<int>(positive_integer(j.at("threads"), "threads"));
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds", "expected a non-empty array");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v = number(s[i], index_path("seeds", i));
      if (v < 0 || v != std::floor(v)) throw ConfigError(index_path("seeds", i), "expected a non-negative integer");
      c.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (j.contains("psi")) {
    try {
      c.psi = PsiModulus::from_json(j.at("psi"));
    } catch (const std::exception& e) {
      throw ConfigError("psi", e.what());
    }
  }
  if (j.contains("t_grid")) {
    c.t_grid = increasing_positive(j.at("t_grid"), "t_grid");
    if (c.t_grid.back() > c.T * (1.0 + 1e-12)) throw ConfigError("t_grid", "times must not exceed T");
  }
  if (j.contains("field")) {
    c.field = j.at("field");
    field_dim(c.field, "field");
  }
  if (j.contains("gamma")) c.gamma = measure_value(j.at("gamma"), "gamma");
  if (j.contains("gamma_tilde")) c.gamma_tilde = measure_value(j.at("gamma_tilde"), "gamma_tilde");

  if (c.experiment == "theorem1") {
    if (!j.contains("families")) throw ConfigError("families", "missing");
    const auto& fams = j.at("families");
    if (!fams.is_array() || fams.empty()) throw ConfigError("families", "expected a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < fams.size(); ++i) {
      const std::string path = index_path("families", i);
      const auto& f = fams[i];
      if (!f.is_object()) throw ConfigError(path, "expected an object");
      PerturbationFamily fam;
      fam.name = f.value("name", "family" + std::to_string(i));
      if (!names.insert(fam.name).second) throw ConfigError(join_path(path, "name"), "duplicate name");
      if (!f.contains("field")) throw ConfigError(join_path(path, "field"), "missing");
      fam.field = f.at("field");
      const FieldPtr base = field_value(fam.field, join_path(path, "field"));
      if (base->measure_dependent())
        throw ConfigError(join_path(path, "field"), "perturbation families need measure-free fields");
      const int d = base->dim();
      if (f.contains("u")) fam.u = vector_value(f.at("u"), d, join_path(path, "u"));
      if (f.contains("S")) {
        fam.S = matrix_value(f.at("S"), d, join_path(path, "S"));
        if ((*fam.S - fam.S->transpose()).cwiseAbs().maxCoeff() > 1e-12)
          throw ConfigError(join_path(path, "S"), "must be symmetric");
      }
      if (!fam.u && !fam.S) throw ConfigError(path, "needs a drift perturbation u or a diffusion perturbation S");
      c.families.push_back(std::move(fam));
    }
    if (!j.contains("epsilons")) throw ConfigError("epsilons", "missing");
    c.epsilons = increasing_positive(j.at("epsilons"), "epsilons");
  } else if (c.experiment == "theorem2") {
    if (c.field.is_null()) throw ConfigError("field", "missing");
    c.deltas = j.contains("deltas") ? increasing_positive(j.at("deltas"), "deltas")
                                    : std::vector<double>{0.1, 0.2, 0.5};
    if (j.contains("w_psi_subsample"))
      c.w_psi_subsample = positive_integer(j.at("w_psi_subsample"), "w_psi_subsample");
  } else {
    if (c.field.is_null()) throw ConfigError("field", "missing");
    if (!c.gamma) throw ConfigError("gamma", "missing");
    if (!c.gamma_tilde) throw ConfigError("gamma_tilde", "missing");
    if (j.contains("tilts")) {
      const auto& t = j.at("tilts");
      c.tilts.min = positive(t.value("min", json(c.tilts.min)), "tilts.min");
      c.tilts.max = positive(t.value("max", json(c.tilts.max)), "tilts.max");
      c.tilts.ratio = positive(t.value("ratio", json(c.tilts.ratio)), "tilts.ratio");
      if (!(c.tilts.ratio > 1.0)) throw ConfigError("tilts.ratio", "must exceed 1");
      if (!(c.tilts.max >= c.tilts.min)) throw ConfigError("tilts.max", "must be >= tilts.min");
    }
    if (j.contains("bumps")) {
      const auto& b = j.at("bumps");
      if (!b.is_array()) throw ConfigError("bumps", "expected an array");
      for (std::size_t i = 0; i < b.size(); ++i) {
        const std::string path = index_path("bumps", i);
        Bump bump;
        bump.center = number(b[i].value("center", json(0.0)), join_path(path, "center"));
        bump.width = positive(b[i].value("width", json(0.5)), join_path(path, "width"));
        bump.floor = positive(b[i].value("floor", json(0.1)), join_path(path, "floor"));
        c.bumps.push_back(bump);
      }
    }
    if (j.contains("max_rel_se")) c.max_rel_se = positive(j.at("max_rel_se"), "max_rel_se");
    if (j.contains("entropy_check")) {
      const auto& e = j.at("entropy_check");
      EntropyCheckConfig ec;
      ec.field = e.value("field", json{{"family", "frozen"}, {"B", -1.0}, {"a", 1.0}});
      field_dim(ec.field, "entropy_check.field");
      ec.x = number(e.value("x", json(ec.x)), "entropy_check.x");
      ec.y = number(e.value("y", json(ec.y)), "entropy_check.y");
      ec.t = positive(e.value("t", json(ec.t)), "entropy_check.t");
      ec.N = positive_integer(e.value("N", json(ec.N)), "entropy_check.N");
      ec.k = static_cast<int>(positive_integer(e.value("k", json(ec.k)), "entropy_check.k"));
      c.entropy_check = ec;
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("JSON parse error: ") + e.what());
  }
  return from_json(j);
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

json module_versions() {
  return {{"psi_modulus", "1.0.0"}, {"measures", "1.0.0"}, {"coefficients", "1.0.0"},
          {"sde", "1.0.0"},         {"mkv", "1.0.0"},      {"harness", "1.0.0"}};
}

bool ScalingReport::passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.passed; });
}

json ScalingReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json row{{"series", r.series}, {"t", r.t},     {"epsilon", r.epsilon}, {"seed", r.seed},
             {"lhs", r.lhs},       {"rhs", r.rhs}, {"method", r.method}};
    if (r.se) row["se"] = *r.se;
    rows_json.push_back(row);
  }
  json fits_json = json::array();
  for (const auto& f : fits)
    fits_json.push_back({{"series", f.series},
                         {"t", f.t},
                         {"slope", f.fit.slope},
                         {"intercept", f.fit.intercept},
                         {"r2", f.fit.r2},
                         {"slope_ci", {f.ci.lo, f.ci.hi}},
                         {"points", f.points}});
  json crit = json::array();
  for (const auto& c : criteria)
    crit.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"schema_version", kSchemaVersion},
          {"experiment", experiment},
          {"module_versions", module_versions()},
          {"config_hash", config_hash},
          {"config", config},
          {"rows", rows_json},
          {"fits", fits_json},
          {"noise_floor", noise_floor},
          {"criteria", crit},
          {"warnings", warnings},
          {"extra", extra},
          {"passed", passed()}};
}

std::vector<std::string> ScalingReport::series_names() const {
  std::vector<std::string> names;
  for (const auto& r : rows)
    if (std::find(names.begin(), names.end(), r.series) == names.end()) names.push_back(r.series);
  return names;
}

std::string ScalingReport::rows_csv(const std::string& series) const {
  std::ostringstream out;
  out.precision(17);
  out << "t,epsilon,seed,lhs,rhs,method\n";
  for (const auto& r : rows) {
    if (r.series != series) continue;
    out << r.t << ',' << r.epsilon << ',' << r.seed << ',' << r.lhs << ',' << r.rhs << ','
        << r.method << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> ScalingReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  const auto report_path = dir / (experiment + "_report.json");
  {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path.string());
    out << to_json().dump(2) << '\n';
  }
  paths.push_back(report_path);
  for (const auto& s : series_names()) {
    const auto p = dir / (experiment + "_" + s + ".csv");
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << rows_csv(s);
    paths.push_back(p);
  }
  return paths;
}

double marginal_wk(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double k,
                   std::string* method) {
  if (a.dim() == 1) {
    if (method) *method = "quantile-1d";
    return wasserstein_k(a, b, k, OtMethod::quantile_1d).value;
  }
  if (method) *method = "exact-LP-subsampled-200x5";
  OtOptions ot;
  ot.max_lp_cells = 40'000;
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s)
    acc += wasserstein_k(a.stratified_subsample(200, s), b.stratified_subsample(200, s), k,
                         OtMethod::exact_lp, ot)
               .value;
  return acc / 5.0;
}

namespace {

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

/// Step indices of the requested times; off-grid times are snapped with a warning.
std::vector<int> grid_steps(const std::vector<double>& ts, double T, int n_steps,
                            std::vector<std::string>& warnings) {
  std::vector<int> steps;
  for (double t : ts) {
    const double exact = t / T * n_steps;
    const int m = static_cast<int>(std::lround(exact));
    if (std::abs(exact - m) > 1e-9)
      warnings.push_back("t = " + fmt(t, 8) + " is not a grid node; snapped to " +
                         fmt(T * m / n_steps, 8));
    steps.push_back(m);
  }
  return steps;
}

EmpiricalMeasure marginal_at_step(const PathEnsemble& e, int step, int n_steps, double T) {
  return marginal_law(e, T * step / n_steps);
}

EmpiricalMeasure shifted(const EmpiricalMeasure& mu, double delta) {
  EmpiricalMeasure::Points p = mu.points();
  p.col(0).array() += delta;
  return EmpiricalMeasure(std::move(p), mu.weights());
}

double exact_wk(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double k) {
  OtOptions ot;
  ot.max_lp_cells = 1'000'000;
  return wasserstein_k(a, b, k, OtMethod::exact_lp, ot).value;
}

SimulationOptions sim_options(const ExperimentConfig& c, std::uint64_t seed,
                              const std::vector<int>& steps, long long N) {
  SimulationOptions o;
  o.n_paths = N;
  o.n_steps = c.n_steps;
  o.seed = seed;
  o.threads = c.threads;
  o.record_steps = steps;
  return o;
}

std::vector<double> default_geometric(double T, int levels) {
  std::vector<double> ts;
  for (int j = levels; j >= 0; --j) ts.push_back(T * std::ldexp(1.0, -j));
  return ts;
}

}  // namespace

ScalingReport exp_theorem1_perturbation(const ExperimentConfig& c) {
  ScalingReport rep;
  rep.experiment = "theorem1";
  rep.config = c.raw;
  rep.config_hash = config_hash(c.raw);
  const std::vector<double> ts = c.t_grid.empty() ? default_geometric(c.T, 4) : c.t_grid;
  const auto steps = grid_steps(ts, c.T, c.n_steps, rep.warnings);

  json fits_extra = json::array();
  for (std::size_t fi = 0; fi < c.families.size(); ++fi) {
    const auto& fam = c.families[fi];
    const FieldPtr base = field_from_json(fam.field);
    const int d = base->dim();
    const EmpiricalMeasure gamma = c.gamma ? *c.gamma : EmpiricalMeasure::dirac(Eigen::VectorXd::Zero(d));
    if (gamma.dim() != d) throw ConfigError("gamma", "dimension does not match families[" + std::to_string(fi) + "].field");
    const Vec u = fam.u.value_or(Vec::Zero(d));
    const Mat S = fam.S.value_or(Mat::Zero(d, d));
    const double u_norm = u.norm();
    const double S_norm = fam.S ? S.jacobiSvd().singularValues()(0) : 0.0;

    std::vector<double> eps_kept;
    for (double eps : c.epsilons) {
      try {
        if (fam.S) sqrt_spd(Mat(base->diffusion(0.0, Vec(gamma.mean()), nullptr) + eps * S));
        eps_kept.push_back(eps);
      } catch (const std::domain_error&) {
        rep.warnings.push_back(fam.name + ": epsilon = " + fmt(eps) +
                               " dropped, perturbed diffusion matrix is not positive definite");
      }
    }

    // mean_lhs[t][eps index] accumulated over seeds; eps index 0 is the control.
    std::vector<double> all_eps{0.0};
    all_eps.insert(all_eps.end(), eps_kept.begin(), eps_kept.end());
    std::vector<std::vector<std::vector<double>>> lhs(
        ts.size(), std::vector<std::vector<double>>(all_eps.size()));
    std::vector<double> indep_floor(ts.size(), 0.0);
    for (std::uint64_t seed : c.seeds) {
      const DiffusionSpec spec1{base, 0.0, c.T, nullptr};
      const auto e1 = euler_maruyama(spec1, gamma, sim_options(c, seed, steps, c.N));
      {
        const auto e_ind = euler_maruyama(spec1, gamma, sim_options(c, mix64(seed + 0x51ed), steps, c.N));
        for (std::size_t ti = 0; ti < ts.size(); ++ti)
          indep_floor[ti] = std::max(
              indep_floor[ti], marginal_wk(marginal_at_step(e1, steps[ti], c.n_steps, c.T),
                                           marginal_at_step(e_ind, steps[ti], c.n_steps, c.T), c.k));
      }
      for (std::size_t ei = 0; ei < all_eps.size(); ++ei) {
        const double eps = all_eps[ei];
        const DiffusionSpec spec2{perturb(base, eps, u, S), 0.0, c.T, nullptr};
        const auto e2 = euler_maruyama(spec2, gamma, sim_options(c, seed, steps, c.N));
        for (std::size_t ti = 0; ti < ts.size(); ++ti) {
          std::string method;
          const double w = marginal_wk(marginal_at_step(e1, steps[ti], c.n_steps, c.T),
                                       marginal_at_step(e2, steps[ti], c.n_steps, c.T), c.k, &method);
          const double t = ts[ti];
          const double rhs = eps * t * u_norm + eps * std::sqrt(t) * S_norm;
          rep.rows.push_back({fam.name, t, eps, seed, w, rhs, method, std::nullopt});
          lhs[ti][ei].push_back(w);
        }
      }
    }

    bool slopes_ok = true, c_ok = true;
    std::ostringstream slope_detail, c_detail;
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
      const double floor = *std::max_element(lhs[ti][0].begin(), lhs[ti][0].end());
      rep.noise_floor.push_back({{"series", fam.name},
                                 {"t", ts[ti]},
                                 {"common_noise_floor", floor},
                                 {"independent_noise_floor", indep_floor[ti]}});
      std::vector<double> xs, ys;
      std::vector<std::size_t> used;
      double cmin = INFINITY, cmax = 0.0;
      for (std::size_t ei = 1; ei < all_eps.size(); ++ei) {
        double mean = 0.0;
        for (double v : lhs[ti][ei]) mean += v;
        mean /= static_cast<double>(lhs[ti][ei].size());
        if (!(mean > 3.0 * floor) || !(mean > 0.0)) continue;
        xs.push_back(all_eps[ei]);
        ys.push_back(mean);
        used.push_back(ei);
        const double rhs = all_eps[ei] * ts[ti] * u_norm + all_eps[ei] * std::sqrt(ts[ti]) * S_norm;
        cmin = std::min(cmin, mean / rhs);
        cmax = std::max(cmax, mean / rhs);
      }
      if (xs.size() < 2) {
        rep.warnings.push_back(fam.name + ": t = " + fmt(ts[ti]) + " has fewer than 2 points above 3x the noise floor");
        slopes_ok = false;
        continue;
      }
      SeriesFit fit;
      fit.series = fam.name;
      fit.t = ts[ti];
      fit.fit = stats::fit_loglog(xs, ys);
      fit.points = static_cast<int>(xs.size());
      const std::size_t n_seeds = c.seeds.size();
      fit.ci = n_seeds > 1 ? stats::bootstrap_ci(
                                 n_seeds,
                                 [&](const std::vector<std::size_t>& idx) {
                                   std::vector<double> by;
                                   for (std::size_t ei : used) {
                                     double m = 0.0;
                                     for (auto s : idx) m += lhs[ti][ei][s];
                                     by.push_back(m / static_cast<double>(idx.size()));
                                   }
                                   return stats::fit_loglog(xs, by).slope;
                                 },
                                 1000, 0.95, 0)
                           : stats::Interval{fit.fit.slope, fit.fit.slope};
      rep.fits.push_back(fit);
      const bool in_band = std::abs(fit.fit.slope - 1.0) <= 0.15;
      slopes_ok = slopes_ok && in_band;
      slope_detail << (ti ? ", " : "") << "t=" << fmt(ts[ti]) << ": " << fmt(fit.fit.slope);
      const double spread = cmax / cmin;
      c_ok = c_ok && spread <= 2.0;
      c_detail << (ti ? ", " : "") << "t=" << fmt(ts[ti]) << ": C in [" << fmt(cmin) << ", " << fmt(cmax) << "]";
    }
    rep.criteria.push_back({fam.name + ": log-log slope of W_k vs epsilon in [0.85, 1.15]", slopes_ok,
                            slope_detail.str()});
    rep.criteria.push_back({fam.name + ": C = LHS/RHS stable (max/min <= 2)", c_ok, c_detail.str()});
  }
  return rep;
}

ScalingReport exp_theorem2_stability(const ExperimentConfig& c) {
  ScalingReport rep;
  rep.experiment = "theorem2";
  rep.config = c.raw;
  rep.config_hash = config_hash(c.raw);
  const FieldPtr field = field_from_json(c.field);
  const int d = field->dim();
  const EmpiricalMeasure gamma = c.gamma ? *c.gamma : EmpiricalMeasure::dirac(Eigen::VectorXd::Zero(d));
  if (gamma.dim() != d) throw ConfigError("gamma", "dimension does not match field");
  std::vector<double> ts = c.t_grid;
  if (ts.empty()) {
    ts = default_geometric(c.T, 6);
    for (double f : {0.25, 0.5}) ts.push_back(f * c.T);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             ts.end());
  }
  const auto steps = grid_steps(ts, c.T, c.n_steps, rep.warnings);
  OtOptions ot;
  ot.max_lp_cells = 1'000'000;

  std::vector<double> all_deltas{0.0};
  all_deltas.insert(all_deltas.end(), c.deltas.begin(), c.deltas.end());
  for (std::uint64_t seed : c.seeds) {
    const auto base = particle_simulate(field, gamma, c.T, sim_options(c, seed, steps, c.N));
    for (double delta : all_deltas) {
      const EmpiricalMeasure gt = shifted(gamma, delta);
      const auto other = delta == 0.0 ? base : particle_simulate(field, gt, c.T, sim_options(c, seed, steps, c.N));
      const double wk0 = exact_wk(gamma, gt, c.k);
      const double w10 = exact_wk(gamma, gt, 1.0);
      for (std::size_t ti = 0; ti < ts.size(); ++ti) {
        const double t = ts[ti];
        const auto a = marginal_at_step(base.paths, steps[ti], c.n_steps, c.T);
        const auto b = marginal_at_step(other.paths, steps[ti], c.n_steps, c.T);
        std::string method;
        const double wk = marginal_wk(a, b, c.k, &method);
        rep.rows.push_back({"W_k", t, delta, seed, wk, wk0, method, std::nullopt});
        const auto as = a.stratified_subsample(c.w_psi_subsample, seed);
        const auto bs = b.stratified_subsample(c.w_psi_subsample, seed);
        const double wpsi = w_psi_primal(as, bs, c.psi, ot).value;
        const double env = c.psi(std::sqrt(t)) / std::sqrt(t) * w10 + wk0;
        rep.rows.push_back({"W_psi", t, delta, seed, wpsi, env,
                            "exact-LP-subsampled-" + std::to_string(as.size()), std::nullopt});
      }
    }
  }

  double rmin = INFINITY, rmax = 0.0, floor_wk = 0.0, floor_psi = 0.0;
  double c_fit = 0.0, small_max = 0.0;
  bool any_small = false;
  for (const auto& r : rep.rows) {
    if (r.epsilon == 0.0) {
      (r.series == "W_k" ? floor_wk : floor_psi) = std::max(r.series == "W_k" ? floor_wk : floor_psi, r.lhs);
      continue;
    }
    const double ratio = r.lhs / r.rhs;
    if (r.series == "W_k") {
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
    } else if (r.t >= 0.25 * c.T - 1e-12) {
      c_fit = std::max(c_fit, ratio);
    } else {
      any_small = true;
      small_max = std::max(small_max, ratio);
    }
  }
  rep.noise_floor.push_back({{"series", "W_k"}, {"common_noise_floor", floor_wk}});
  rep.noise_floor.push_back({{"series", "W_psi"}, {"common_noise_floor", floor_psi}});
  rep.extra["wk_ratio_range"] = {rmin, rmax};
  rep.extra["w_psi_envelope_constant"] = c_fit;
  rep.extra["w_psi_small_t_max_ratio"] = small_max;
  rep.extra["w_psi_subsample"] = c.w_psi_subsample;
  rep.criteria.push_back({"W_k(P_t g, P_t g~) / W_k(g, g~) bounded across delta and t (max/min < 3)",
                          rmin > 0.0 && rmax / rmin < 3.0,
                          "ratio in [" + fmt(rmin) + ", " + fmt(rmax) + "]"});
  rep.criteria.push_back(
      {"W_psi at t < T/4 within the envelope constant fitted on t >= T/4 (5% slack)",
       !any_small || small_max <= 1.05 * c_fit,
       "fitted c = " + fmt(c_fit) + ", small-t max ratio = " + fmt(small_max)});
  return rep;
}

namespace {

struct GapEstimate {
  double gap = 0.0;
  double se = 0.0;
  double rel_se = 0.0;  ///< relative standard error of the mean of f under the second law
};

/// P log f(X) - log P f(Y) over paired samples, with the delta-method
/// standard error from per-path influence values.
GapEstimate harnack_gap(const EmpiricalMeasure& X, const EmpiricalMeasure& Y,
                        const std::function<double(double)>& log_f) {
  const Eigen::Index n = X.size();
  std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
  double ma = 0.0, mb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    a[static_cast<std::size_t>(i)] = log_f(X.points()(i, 0));
    b[static_cast<std::size_t>(i)] = std::exp(log_f(Y.points()(i, 0)));
    ma += a[static_cast<std::size_t>(i)];
    mb += b[static_cast<std::size_t>(i)];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  std::vector<double> infl(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < infl.size(); ++i) infl[i] = a[i] - b[i] / mb;
  GapEstimate g;
  g.gap = ma - std::log(mb);
  g.se = stats::mean_se(infl).se;
  g.rel_se = stats::mean_se(b).se / mb;
  return g;
}

/// (1/t) int_0^t psi(r)^2 / r dr, in the variable u = log r.
double mean_square_dini(const PsiModulus& psi, double t) {
  const double hi = std::log(t);
  const auto f = [&](double u) {
    const double p = psi(std::exp(u));
    return p * p;
  };
  return adaptive_simpson(f, hi - 60.0, hi, 1e-10) / t;
}

}  // namespace

ScalingReport exp_log_harnack(const ExperimentConfig& c) {
  ScalingReport rep;
  rep.experiment = "log_harnack";
  rep.config = c.raw;
  rep.config_hash = config_hash(c.raw);
  const FieldPtr field = field_from_json(c.field);
  const EmpiricalMeasure& gamma = *c.gamma;
  const EmpiricalMeasure& gamma_t = *c.gamma_tilde;
  if (gamma.dim() != field->dim() || gamma_t.dim() != field->dim())
    throw ConfigError("gamma", "dimension does not match field");
  std::vector<double> ts = c.t_grid;
  if (ts.empty())
    for (double f : {0.1, 0.2, 0.5, 1.0}) ts.push_back(f * c.T);
  const auto steps = grid_steps(ts, c.T, c.n_steps, rep.warnings);
  const double w2 = exact_wk(gamma, gamma_t, 2.0);
  if (!(w2 > 0.0)) throw ConfigError("gamma_tilde", "must differ from gamma");

  std::vector<double> thetas;
  for (int j = static_cast<int>(std::floor(std::log(c.tilts.min) / std::log(c.tilts.ratio) - 1e-9));; ++j) {
    const double th = std::pow(c.tilts.ratio, j);
    if (th < c.tilts.min * (1.0 - 1e-12)) continue;
    if (th > c.tilts.max * (1.0 + 1e-12)) break;
    thetas.push_back(j == 0 ? 1.0 : th);
  }

  const bool interacting = field->measure_dependent();
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> gap_by_f;  // (t, f id) -> per seed
  std::map<std::string, int> dropped;
  json entropy = json::array();
  for (std::uint64_t seed : c.seeds) {
    const DiffusionSpec spec{field, 0.0, c.T, nullptr};
    const auto opts = sim_options(c, seed, steps, c.N);
    const auto ex = simulate(spec, gamma, opts, interacting, nullptr);
    const auto ey = simulate(spec, gamma_t, opts, interacting, nullptr);
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
      const double t = ts[ti];
      const auto X = marginal_at_step(ex, steps[ti], c.n_steps, c.T);
      const auto Y = marginal_at_step(ey, steps[ti], c.n_steps, c.T);
      const double rhs = w2 * w2 / t;
      rep.rows.push_back({"constant", t, 0.0, seed, harnack_gap(X, Y, [](double) { return 0.0; }).gap,
                          rhs, "monte-carlo", 0.0});
      for (double th : thetas) {
        const auto g = harnack_gap(X, Y, [th](double z) { return th * z; });
        if (g.rel_se > c.max_rel_se) {
          ++dropped["tilt theta=" + fmt(th) + " at t=" + fmt(t)];
          continue;
        }
        rep.rows.push_back({"tilt", t, th, seed, g.gap, rhs, "monte-carlo", g.se});
        gap_by_f[{ti, "tilt:" + fmt(th, 17)}].push_back(g.gap);
      }
      for (const auto& bump : c.bumps) {
        const auto g = harnack_gap(X, Y, [&](double z) {
          const double r = (z - bump.center) / bump.width;
          return std::log(bump.floor + std::exp(-0.5 * r * r));
        });
        if (g.rel_se > c.max_rel_se) {
          ++dropped["bump center=" + fmt(bump.center) + " at t=" + fmt(t)];
          continue;
        }
        rep.rows.push_back({"bump", t, bump.center, seed, g.gap, rhs, "monte-carlo", g.se});
        gap_by_f[{ti, "bump:" + fmt(bump.center, 17) + ":" + fmt(bump.width, 17)}].push_back(g.gap);
      }
      if (seed == c.seeds.front()) {
        const auto Xs = X.stratified_subsample(20'000, seed);
        const auto Ys = Y.stratified_subsample(20'000, seed);
        double knn = NAN, gauss = NAN;
        try {
          knn = relative_entropy(Xs, Ys, EntropyMode::knn, 1);
          gauss = relative_entropy(Xs, Ys, EntropyMode::gaussian_closed_form);
        } catch (const std::exception& e) {
          rep.warnings.push_back("entropy at t = " + fmt(t) + ": " + e.what());
        }
        entropy.push_back({{"t", t},
                           {"ent_knn", knn},
                           {"ent_gaussian", gauss},
                           {"c_ent_knn", knn * t / (w2 * w2)},
                           {"lh1_correction_dini", mean_square_dini(c.psi, t)},
                           {"lh1_correction_log", std::pow(c.psi(std::sqrt(t)), 2) / t * std::log(1.0 + 1.0 / t)}});
      }
    }
  }
  for (const auto& [what, count] : dropped)
    rep.warnings.push_back("dropped " + what + " (relative standard error above " + fmt(c.max_rel_se) +
                           " for " + std::to_string(count) + " seed(s))");

  std::vector<double> c_t(ts.size(), -INFINITY);
  std::vector<std::string> argmax(ts.size());
  for (const auto& [key, gaps] : gap_by_f) {
    if (gaps.size() != c.seeds.size()) continue;  // dropped for some seed
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    const double cval = mean * ts[key.first] / (w2 * w2);
    if (cval > c_t[key.first]) {
      c_t[key.first] = cval;
      argmax[key.first] = key.second;
    }
  }
  json per_t = json::array();
  double cmin = INFINITY, cmax = -INFINITY;
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    per_t.push_back({{"t", ts[ti]}, {"c", c_t[ti]}, {"argmax_f", argmax[ti]}});
    cmin = std::min(cmin, c_t[ti]);
    cmax = std::max(cmax, c_t[ti]);
  }
  rep.extra["c_by_t"] = per_t;
  rep.extra["w2_initial"] = w2;
  rep.extra["entropy"] = entropy;
  rep.criteria.push_back({"max_f c(t, f) flat across t (max/min < 2)", cmin > 0.0 && cmax / cmin < 2.0,
                          "c(t) in [" + fmt(cmin) + ", " + fmt(cmax) + "]"});

  if (c.entropy_check) {
    const auto& ec = *c.entropy_check;
    const FieldPtr ou = field_from_json(ec.field);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(ou->dim()), y0 = x0;
    x0(0) = ec.x;
    y0(0) = ec.y;
    SimulationOptions o;
    o.n_paths = ec.N;
    o.n_steps = std::max(1, static_cast<int>(std::lround(c.n_steps * ec.t / c.T)));
    o.seed = c.seeds.front();
    o.threads = c.threads;
    const DiffusionSpec spec{ou, 0.0, ec.t, nullptr};
    const bool inter = ou->measure_dependent();
    const auto a = simulate(spec, EmpiricalMeasure::dirac(x0), o, inter, nullptr);
    o.seed = mix64(o.seed + 0xe7);
    const auto b = simulate(spec, EmpiricalMeasure::dirac(y0), o, inter, nullptr);
    const auto A = a.marginal_at(a.times().size() - 1);
    const auto B = b.marginal_at(b.times().size() - 1);
    const double knn = relative_entropy(A, B, EntropyMode::knn, ec.k);
    const double gauss = relative_entropy(A, B, EntropyMode::gaussian_closed_form);
    const double rel = std::abs(knn - gauss) / std::abs(gauss);
    rep.extra["entropy_check"] = {{"t", ec.t}, {"x", ec.x}, {"y", ec.y}, {"N", ec.N},
                                  {"ent_knn", knn}, {"ent_gaussian", gauss}, {"relative_difference", rel}};
    rep.criteria.push_back({"entropy check: knn vs Gaussian KL within 10%", rel <= 0.10,
                            "knn = " + fmt(knn) + ", gaussian = " + fmt(gauss)});
  }
  return rep;
}

ScalingReport run_experiment(const ExperimentConfig& config) {
  if (config.experiment == "theorem1") return exp_theorem1_perturbation(config);
  if (config.experiment == "theorem2") return exp_theorem2_stability(config);
  if (config.experiment == "log_harnack") return exp_log_harnack(config);
  throw ConfigError("experiment", "unknown experiment '" + config.experiment + "'");
}

int run(const std::filesystem::path& config_path, const RunOverrides& overrides, std::ostream& out,
        std::ostream& err) {
  try {
    ExperimentConfig config = ExperimentConfig::load(config_path);
    if (overrides.seed) {
      config.seeds = {*overrides.seed};
      config.raw["seeds"] = json::array({*overrides.seed});
    }
    if (overrides.threads) config.threads = *overrides.threads;
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    const ScalingReport report = run_experiment(config);
    const auto paths = report.write(config.out_dir);

    out << "experiment " << report.experiment << "  config " << report.config_hash << '\n';
    std::size_t width = 9;
    for (const auto& c : report.criteria) width = std::max(width, c.name.size());
    for (const auto& c : report.criteria)
      out << "  " << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
          << (c.passed ? "PASS" : "FAIL") << "  " << c.detail << '\n';
    for (const auto& w : report.warnings) out << "  warning: " << w << '\n';
    for (const auto& p : paths) out << "  wrote " << p.string() << '\n';
    return report.passed() ? 0 : 2;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mkvlab::harness
