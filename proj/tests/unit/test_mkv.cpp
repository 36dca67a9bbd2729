#include "mkvlab/mkv.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace mkvlab;
using doctest::Approx;

namespace {

SimulationOptions opts(long long n, int steps, std::uint64_t seed = 1) {
  SimulationOptions o;
  o.n_paths = n;
  o.n_steps = steps;
  o.seed = seed;
  return o;
}

EmpiricalMeasure at(double x) { return EmpiricalMeasure::on_line({x}); }

FieldPtr ou_1d() {
  return std::make_shared<LinearField>(Mat::Constant(1, 1, -1.0), Vec::Zero(1), Mat::Identity(1, 1));
}

}  // namespace

TEST_SUITE("mkv") {

TEST_CASE("particles of a measure-free field coincide with euler_maruyama") {
  const auto p = particle_simulate(ou_1d(), at(0.3), 1.0, opts(500, 40, 3));
  const auto e = euler_maruyama({ou_1d(), 0.0, 1.0}, at(0.3), opts(500, 40, 3));
  CHECK(p.paths.data() == e.data());
  CHECK(p.flow.size() == 41);
}

TEST_CASE("mean-field OU particles conserve the mean") {
  const auto field = std::make_shared<MeanFieldOu>(1);
  const auto p = particle_simulate(field, at(1.5), 1.0, opts(20'000, 100));
  for (std::size_t i = 0; i < p.flow.size(); i += 20) {
    const auto x = oracle::column(p.flow.at(i));
    const auto [m, v] = oracle::mean_var(x);
    const double t = p.flow.times[i];
    CHECK(std::abs(m - 1.5) <= 3.0 * std::sqrt(std::max(v, 1e-300) / x.size()) + 1e-12);
    if (t > 0.0) CHECK(v == Approx(oracle::ou_variance(1.0, 1.0, t)).epsilon(0.05));
  }
}

TEST_CASE("phi_map of a measure-free field ignores its input") {
  const auto gamma = sample_initial(at(0.0), 300, 1);
  const auto a = MeasureFlow::constant(gamma, 0.0, 1.0, 20);
  const auto out1 = phi_map(ou_1d(), a, gamma, 300, 7);
  const auto out2 = phi_map(ou_1d(), out1, gamma, 300, 7);
  RhoOptions r;
  CHECK(rho_lambda(out1, out2, r).value == 0.0);
}

TEST_CASE("phi_map with a frozen Dirac flow gives the frozen-mean OU law") {
  const auto field = std::make_shared<MeanFieldOu>(1);
  const auto gamma = sample_initial(at(2.0), 20'000, 1);
  const auto input = MeasureFlow::constant(gamma, 0.0, 1.0, 100);
  const auto out = phi_map(field, input, gamma, 20'000, 2);
  const auto [m, v] = oracle::mean_var(oracle::column(out.at(100)));
  CHECK(m == Approx(2.0).epsilon(0.01));
  CHECK(v == Approx(oracle::ou_variance(1.0, 1.0, 1.0)).epsilon(0.05));
  const auto again = phi_map(field, input, gamma, 20'000, 2);
  CHECK(same_law(again.at(100), out.at(100), 0.0));
}

TEST_CASE("phi_map guards") {
  const auto gamma = sample_initial(at(0.0), 10, 1);
  auto flow = MeasureFlow::constant(gamma, 0.0, 1.0, 4);
  CHECK_THROWS(phi_map(ou_1d(), flow, sample_initial(at(1.0), 10, 1), 10, 1));
  flow.times[2] = 0.7;
  CHECK_THROWS(phi_map(ou_1d(), flow, gamma, 10, 1));
}

TEST_CASE("rho_lambda on Dirac flows") {
  const double c = 0.75;
  const auto a = MeasureFlow::constant(at(0.0), 0.0, 1.0, 10);
  const auto b = MeasureFlow::constant(at(c), 0.0, 1.0, 10);
  RhoOptions r;
  r.k = 1.0;
  CHECK(rho_lambda(a, a, r).value == 0.0);
  CHECK(rho_lambda(a, b, r).value == Approx(2 * c));
  r.lambda = 3.0;
  const auto res = rho_lambda(a, b, r);
  CHECK(res.value == Approx(2 * c));
  CHECK(res.t_at_max == 0.0);
  CHECK_THROWS(rho_lambda(a, MeasureFlow::constant(at(0.0), 0.0, 1.0, 5), r));
}

TEST_CASE("Picard control: measure-free field stops after one iteration") {
  PicardOptions o;
  o.n_paths = 500;
  o.n_steps = 20;
  o.seed = 4;
  const auto s = picard_solve(ou_1d(), at(0.0), o);
  CHECK(s.converged);
  CHECK(s.iteration == 1);
  CHECK(s.history.size() == 2);
  CHECK(s.history.back() == 0.0);
}

TEST_CASE("Picard on mean-field OU contracts") {
  PicardOptions o;
  o.n_paths = 2000;
  o.n_steps = 50;
  o.seed = 5;
  o.rho.lambda = 10.0;
  const auto field = std::make_shared<MeanFieldOu>(1);
  const auto s = picard_solve(field, at(1.0), o);
  CHECK(s.converged);
  CHECK_FALSE(s.non_contraction);
  for (double r : s.ratios) CHECK(r < 1.0);
  const auto j = s.to_json();
  CHECK(j.at("history").size() == s.history.size());
  CHECK(j.contains("seed_policy"));
}

TEST_CASE("Picard writes its iteration log") {
  PicardOptions o;
  o.n_paths = 100;
  o.n_steps = 20;
  const auto dir = std::filesystem::temp_directory_path() / "mkvlab_unit" / "picard";
  std::filesystem::remove_all(dir);
  o.run_dir = dir;
  picard_solve(std::make_shared<MeanFieldOu>(1), at(0.0), o);
  CHECK(std::filesystem::exists(dir / "picard.json"));
  CHECK(std::filesystem::exists(dir / "flow_0" / "node_times.csv"));
  CHECK(std::filesystem::exists(dir / "flow_1"));
}

TEST_CASE("lambda sweep: larger lambda gives smaller distances") {
  PicardOptions o;
  o.n_paths = 1000;
  o.n_steps = 40;
  ExaParams p;
  p.kappa = 1.0;
  p.kappa_y = 1.5;
  const auto sweep = lambda_sweep(make_exa_field(p), at(1.0), o, {0.0, 2.0, 10.0}, 3);
  REQUIRE(sweep.history.size() == 3);
  for (std::size_t n = 0; n < sweep.history[0].size(); ++n) {
    CHECK(sweep.history[1][n] <= sweep.history[0][n] + 1e-15);
    CHECK(sweep.history[2][n] <= sweep.history[1][n] + 1e-15);
  }
  CHECK(sweep.to_json().size() == 3);
}

}  // TEST_SUITE
