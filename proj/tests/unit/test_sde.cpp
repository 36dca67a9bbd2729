#include "mkvlab/sde.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mkvlab;
using doctest::Approx;

namespace {

FieldPtr linear_1d(double B, double c, double a) {
  return std::make_shared<LinearField>(Mat::Constant(1, 1, B), Vec::Constant(1, c), Mat::Constant(1, 1, a));
}

SimulationOptions opts(long long n, int steps, std::uint64_t seed = 1) {
  SimulationOptions o;
  o.n_paths = n;
  o.n_steps = steps;
  o.seed = seed;
  return o;
}

EmpiricalMeasure at(double x) { return EmpiricalMeasure::on_line({x}); }

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "mkvlab_unit" / name;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_SUITE("sde") {

TEST_CASE("deterministic drift") {
  const auto e = euler_maruyama({linear_1d(0.0, 1.0, 1e-12), 0.25, 1.0}, at(0.5), opts(50, 100));
  const auto m = marginal_law(e, 1.0);
  for (double x : oracle::column(m)) CHECK(std::abs(x - 1.25) < 1e-4);
  CHECK(e.times().front() == 0.25);
  const auto start = marginal_law(e, 0.25);
  for (double x : oracle::column(start)) CHECK(x == 0.5);
}

TEST_CASE("OU variance matches the closed form") {
  const auto e = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), opts(40'000, 400));
  for (double t : {0.25, 0.5, 1.0}) {
    const auto x = oracle::column(marginal_law(e, t));
    const auto [m, v] = oracle::mean_var(x);
    const double want = oracle::ou_variance(1.0, 1.0, t);
    const double se_v = want * std::sqrt(2.0 / static_cast<double>(x.size()));
    CHECK(std::abs(m) < 4.0 * std::sqrt(want / static_cast<double>(x.size())));
    // time step bias is O(dt) = 2.5e-3 relative; allow it on top of 3 SE
    CHECK(std::abs(v - want) < 3.0 * se_v + 3e-3 * want);
  }
}

TEST_CASE("OU at large time approaches the stationary variance") {
  const auto e = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 6.0}, at(3.0), opts(20'000, 600));
  const auto [m, v] = oracle::mean_var(oracle::column(marginal_law(e, 6.0)));
  CHECK(std::abs(m) < 0.05);
  CHECK(v == Approx(1.0).epsilon(0.04));
}

TEST_CASE("Brownian motion in two dimensions has covariance 2t I") {
  const auto f = std::make_shared<LinearField>(Mat::Zero(2, 2), Vec::Zero(2), Mat::Identity(2, 2));
  Eigen::VectorXd x0(2);
  x0 << 1.0, -1.0;
  const auto e = euler_maruyama({f, 0.0, 0.5}, EmpiricalMeasure::dirac(x0), opts(40'000, 10));
  const auto m = marginal_law(e, 0.5);
  const Eigen::MatrixXd c = m.covariance();
  CHECK(c(0, 0) == Approx(1.0).epsilon(0.04));
  CHECK(c(1, 1) == Approx(1.0).epsilon(0.04));
  CHECK(std::abs(c(0, 1)) < 0.04);
  CHECK((m.mean() - x0).norm() < 0.03);
}

TEST_CASE("property: results do not depend on the thread count") {
  auto o = opts(2000, 50, 9);
  const auto one = euler_maruyama({linear_1d(-1.0, 0.3, 0.7), 0.0, 1.0}, at(0.2), o);
  o.threads = 3;
  const auto three = euler_maruyama({linear_1d(-1.0, 0.3, 0.7), 0.0, 1.0}, at(0.2), o);
  CHECK(one.data() == three.data());
}

TEST_CASE("property: path i depends only on (seed, i)") {
  const auto small = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), opts(10, 20, 4));
  const auto large = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), opts(100, 20, 4));
  for (std::size_t r = 0; r < small.times().size(); ++r)
    for (long long i = 0; i < 10; ++i) CHECK(small.state(r, i)[0] == large.state(r, i)[0]);
  const auto other = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), opts(10, 20, 5));
  CHECK(other.data() != small.data());
}

TEST_CASE("initial laws with N atoms are used atom by atom") {
  const auto init = EmpiricalMeasure::on_line({1.0, 2.0, 3.0});
  const auto e = euler_maruyama({linear_1d(0.0, 0.0, 1.0), 0.0, 1.0}, init, opts(3, 5));
  CHECK(e.state(0, 0)[0] == 1.0);
  CHECK(e.state(0, 2)[0] == 3.0);
  const auto drawn = sample_initial(EmpiricalMeasure::on_line({-1.0, 1.0}, {0.25, 0.75}), 20'000, 3);
  const auto [m, v] = oracle::mean_var(oracle::column(drawn));
  CHECK(m == Approx(0.5).epsilon(0.05));
}

TEST_CASE("recording options") {
  auto o = opts(5, 100);
  o.record_stride = 30;
  const auto e = euler_maruyama({linear_1d(0.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), o);
  CHECK(e.times() == std::vector<double>{0.0, 0.3, 0.6, 0.9, 1.0});
  o.record_stride = 1;
  o.record_steps = {50, 25};
  const auto f = euler_maruyama({linear_1d(0.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), o);
  CHECK(f.times() == std::vector<double>{0.0, 0.25, 0.5, 1.0});
  std::string warning;
  marginal_law(f, 0.3, &warning);
  CHECK_FALSE(warning.empty());
  CHECK_THROWS_AS(marginal_law(f, 1.5), std::out_of_range);
}

TEST_CASE("running supremum and moment estimate") {
  const auto e = euler_maruyama({linear_1d(0.0, 1.0, 1e-12), 0.0, 1.0}, at(2.0), opts(10, 100));
  CHECK(moment_sup_estimate(e, 2.0) == Approx(9.0).epsilon(1e-4));
  std::vector<double> per_x;
  for (double x : {1.0, 2.0, 5.0, 10.0}) {
    const auto ou = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(x), opts(2000, 100));
    const double est = moment_sup_estimate(ou, 2.0);
    if (x == 10.0) CHECK(est <= 100.0 * 1.01);
    per_x.push_back(est / (1.0 + x * x));
  }
  for (double r : per_x) CHECK(r < 3.0 * per_x.back());
}

TEST_CASE("ensemble persistence") {
  const auto e = euler_maruyama({linear_1d(-1.0, 0.0, 1.0), 0.0, 1.0}, at(0.0), opts(7, 4));
  const auto bin = scratch("paths.bin");
  e.write_binary(bin);
  const auto back = PathEnsemble::read_binary(bin);
  CHECK(back.data() == e.data());
  CHECK(back.times() == e.times());
  CHECK(back.seed() == e.seed());
  const auto csv = scratch("paths.csv");
  e.write_csv(csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "path,t,x1");
}

TEST_CASE("blow-up is reported with the failing path") {
  LambdaSpec s;
  s.drift0 = [](double, const Vec& x, const EmpiricalMeasure*) {
    return Vec(x(0) > 5.0 ? Vec::Constant(1, 1e7) : Vec::Constant(1, 0.0));
  };
  s.drift1 = [](double, const Vec&, const EmpiricalMeasure*) { return Vec(Vec::Zero(1)); };
  s.diffusion = [](double, const Vec&, const EmpiricalMeasure*) { return Mat(Mat::Identity(1, 1)); };
  const auto f = make_lambda_field(s);
  const auto init = EmpiricalMeasure::on_line({0.0, 0.0, 6.0, 6.0});
  try {
    euler_maruyama({f, 0.0, 1.0}, init, opts(4, 10));
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.path() == 2);
    CHECK(e.step() == 1);
  }
}

TEST_CASE("guards") {
  const auto mf = std::make_shared<MeanFieldOu>(1);
  CHECK_THROWS_AS(euler_maruyama({mf, 0.0, 1.0}, at(0.0), opts(5, 5)), std::invalid_argument);
  CHECK_THROWS_AS(euler_maruyama({linear_1d(0, 0, 1), 0.0, 1.0}, at(0.0), opts(0, 5)), std::invalid_argument);
  CHECK_THROWS_AS(euler_maruyama({linear_1d(0, 0, 1), 0.0, 1.0},
                                 EmpiricalMeasure::dirac(Eigen::Vector2d(0, 0)), opts(5, 5)),
                  std::invalid_argument);
}

TEST_CASE("midpoint drift for time-singular fields") {
  // b(t) = 1 / sqrt(t) integrates to 2 sqrt(t); the left endpoint would divide by zero.
  LambdaSpec s;
  s.time_singular = true;
  s.drift0 = [](double t, const Vec&, const EmpiricalMeasure*) { return Vec(Vec::Constant(1, 1.0 / std::sqrt(t))); };
  s.drift1 = [](double, const Vec&, const EmpiricalMeasure*) { return Vec(Vec::Zero(1)); };
  s.diffusion = [](double, const Vec&, const EmpiricalMeasure*) { return Mat(Mat::Constant(1, 1, 1e-12)); };
  const auto e = euler_maruyama({make_lambda_field(s), 0.0, 1.0}, at(0.0), opts(3, 1000));
  CHECK(marginal_law(e, 1.0).points()(0, 0) == Approx(2.0).epsilon(0.015));
}

}  // TEST_SUITE
