#include "mkvlab/coefficients.hpp"
#include "mkvlab/distances.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mkvlab;
using doctest::Approx;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

constexpr double kUnitBallVolume[] = {0.0, 2.0, M_PI, 4.0 * M_PI / 3.0};

}  // namespace

TEST_SUITE("coefficients") {

TEST_CASE("integral-type assembly: frozen diffusion when kernels vanish") {
  ExaKernels k;
  k.dim = 2;
  k.lambda = 2.0;
  k.b0 = [](double, const Vec& x) { return Vec(-x); };
  k.b_tilde = [](double, const Vec&, const Vec&) { return Vec(Vec::Zero(2)); };
  k.sigma_tilde = [](double, const Vec&, const Vec&) { return Mat(Mat::Zero(2, 2)); };
  const auto f = assemble_exa(k);
  std::mt19937_64 rng(1);
  const auto mu = oracle::random_weighted(rng, 5, 2);
  const Vec x = vec({0.3, -1.0});
  CHECK((f->diffusion(0.0, x, &mu) - Mat::Identity(2, 2)).norm() < 1e-14);
  CHECK((f->drift(0.0, x, &mu) + x).norm() < 1e-14);
}

TEST_CASE("integral-type assembly reproduces mean-field OU") {
  ExaKernels k;
  k.dim = 1;
  k.lambda = 2.0;
  k.b0 = [](double, const Vec&) { return Vec(Vec::Zero(1)); };
  k.b_tilde = [](double, const Vec& x, const Vec& y) { return Vec(y - x); };
  k.sigma_tilde = [](double, const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  const auto f = assemble_exa(k);
  const auto mu = EmpiricalMeasure::on_line({-1.0, 0.5, 3.0}, {0.2, 0.3, 0.5});
  const double mean = -0.2 + 0.15 + 1.5;
  for (double x : {-2.0, 0.0, 1.7}) {
    CHECK(f->drift(0.0, vec({x}), &mu)(0) == Approx(-x + mean));
    // the frozen evaluation must agree with the direct one
    CHECK(f->freeze(0.0, &mu)->drift(vec({x}))(0) == Approx(-x + mean));
  }
}

TEST_CASE("integral-type assembly: a = (lambda I + sigma sigma^T) / 2") {
  ExaKernels k;
  k.dim = 3;
  k.lambda = 1.0;
  k.b0 = [](double, const Vec&) { return Vec(Vec::Zero(3)); };
  k.b_tilde = [](double, const Vec&, const Vec&) { return Vec(Vec::Zero(3)); };
  k.sigma_tilde = [](double, const Vec&, const Vec&) { return Mat(Mat::Identity(3, 3)); };
  const auto f = assemble_exa(k);
  const auto mu = EmpiricalMeasure::dirac(Eigen::Vector3d(1, 2, 3));
  CHECK((f->diffusion(0.0, vec({0, 0, 0}), &mu) - Mat::Identity(3, 3)).norm() < 1e-14);
}

TEST_CASE("property: separable parametric field equals the general assembly") {
  std::mt19937_64 rng(2);
  for (auto b0 : {ExaParams::B0::zero, ExaParams::B0::linear, ExaParams::B0::singular}) {
    ExaParams p;
    p.dim = 2;
    p.b0 = b0;
    p.b0_c = 0.7;
    p.kappa = 0.8;
    p.kappa_y = 0.6;
    p.kappa_sigma = 0.9;
    const auto fast = make_exa_field(p);
    const auto slow = assemble_exa(exa_kernels(p));
    for (int trial = 0; trial < 20; ++trial) {
      const auto mu = oracle::random_weighted(rng, 1 + trial % 7, 2);
      const Vec x = oracle::random_uniform(rng, 1, 2).point(0);
      const double t = 0.1 * trial;
      CHECK((fast->drift(t, x, &mu) - slow->drift(t, x, &mu)).norm() < 1e-12);
      CHECK((fast->diffusion(t, x, &mu) - slow->diffusion(t, x, &mu)).norm() < 1e-12);
      const auto fz = fast->freeze(t, &mu);
      CHECK((fz->drift(x) - slow->drift(t, x, &mu)).norm() < 1e-12);
    }
  }
}

TEST_CASE("sqrt_spd") {
  CHECK((sqrt_spd(Mat(Mat::Identity(3, 3))) - Mat::Identity(3, 3)).norm() < 1e-14);
  Mat d = Mat::Zero(2, 2);
  d.diagonal() << 4.0, 9.0;
  const Mat s = sqrt_spd(d);
  CHECK(s(0, 0) == Approx(2.0));
  CHECK(s(1, 1) == Approx(3.0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    const Eigen::MatrixXd a = m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd r = sqrt_spd(a);
    CHECK((r * r - a).norm() < 1e-9);
  }
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(sqrt_spd(bad), std::domain_error);
}

TEST_CASE("class K membership") {
  CHECK(scr_k_membership(4, 4, 1));
  CHECK_FALSE(scr_k_membership(3, 3, 2));
  CHECK_FALSE(scr_k_membership(2, 10, 1));
}

TEST_CASE("critical exponent table") {
  CHECK(compute_m0(4, 4, 1).value == Approx(1.6).epsilon(1e-12));
  CHECK(compute_m0(8, 8, 2).value == Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(compute_m0(12, 12, 3).value == Approx(24.0 / 19.0).epsilon(1e-12));
  CHECK_THROWS(compute_m0(3, 3, 2));
}

TEST_CASE("property: critical exponent agrees with an independent scan") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(2.01, 40.0);
  int tested = 0;
  while (tested < 200) {
    const int d = 1 + tested % 3;
    const double p = u(rng), q = u(rng);
    if (!scr_k_membership(p, q, d)) continue;
    ++tested;
    const auto r = compute_m0(p, q, d);
    CHECK(std::abs(r.closed_form - r.bisection) < 1e-9);
    CHECK(std::abs(r.value - oracle::m0_by_scan(p, q, d)) < 1e-9);
    CHECK(r.value > 1.0);
    CHECK(r.value < 2.0);
  }
}

TEST_CASE("localized space-time norm") {
  std::vector<Eigen::VectorXd> centers{Eigen::VectorXd::Zero(1)};
  CHECK(tilde_lpq_norm([](double, const Eigen::VectorXd&) { return 0.0; }, 3, 4, 0, 1, centers).value == 0.0);
  for (int d = 1; d <= 3; ++d) {
    std::vector<Eigen::VectorXd> c{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Constant(d, 5.0)};
    const double p = 3.0, q = 4.0, T = 0.5, cst = 2.5;
    const auto r = tilde_lpq_norm([=](double, const Eigen::VectorXd&) { return cst; }, p, q, 0, T, c);
    CHECK(r.value == Approx(cst * std::pow(kUnitBallVolume[d], 1 / p) * std::pow(T, 1 / q)).epsilon(0.01));
    const auto ind = tilde_lpq_norm(
        [](double, const Eigen::VectorXd& x) { return x.norm() <= 1.0 ? 1.0 : 0.0; }, p, q, 0.2, 0.7,
        {Eigen::VectorXd::Zero(d)});
    CHECK(ind.value == Approx(std::pow(kUnitBallVolume[d], 1 / p) * std::pow(0.5, 1 / q)).epsilon(0.01));
  }
}

TEST_CASE("divergence of matrix fields") {
  const Vec x = vec({0.7, -0.3});
  CHECK(divergence([](const Vec&) { return Mat(Mat::Identity(2, 2)); }, x).norm() < 1e-10);
  const Vec dv = divergence([](const Vec& y) { return Mat(y(0) * y(0) * Mat::Identity(2, 2)); }, x);
  CHECK(dv(0) == Approx(1.4).epsilon(1e-7));
  CHECK(std::abs(dv(1)) < 1e-8);
  Mat c(2, 2);
  c << 1.0, 2.0, -3.0, 0.5;
  const Vec lin = divergence([&](const Vec& y) { return Mat(c * y(0)); }, x);
  // (div a)_i = sum_j d_j (c_ij y_1) = c_i1
  CHECK(lin(0) == Approx(1.0));
  CHECK(lin(1) == Approx(-3.0));
}

TEST_CASE("measure Lipschitz checks") {
  const auto lin = std::make_shared<LinearField>(Mat(-Mat::Identity(1, 1)), Vec(Vec::Zero(1)),
                                                 Mat(Mat::Identity(1, 1)));
  const auto r0 = check_measure_lipschitz(*lin, random_atom_pairs(1));
  CHECK(r0.drift.passed);
  CHECK(r0.drift.measured_constant == 0.0);
  CHECK(r0.diffusion.measured_constant == 0.0);

  MeanFieldOu ou(1);
  const auto r1 = check_measure_lipschitz(ou, random_atom_pairs(1));
  CHECK(r1.drift.passed);
  CHECK(r1.drift.measured_constant <= 1.0 + 1e-9);

  ExaParams p;
  p.dim = 2;
  const auto exa = make_exa_field(p);
  const auto r2 = check_measure_lipschitz(*exa, random_atom_pairs(2), {20});
  CHECK(r2.diffusion.passed);
  CHECK(r2.divergence.passed);
  CHECK(r2.drift.passed);
  CHECK(r2.diffusion.to_json().contains("measured_constant"));
}

TEST_CASE("property: mean shift is bounded by W_1") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = oracle::random_weighted(rng, 1 + trial % 6, 2);
    const auto b = oracle::random_weighted(rng, 1 + trial % 5, 2);
    CHECK((a.mean() - b.mean()).norm() <= wasserstein_k(a, b, 1.0, OtMethod::exact_lp).value + 1e-12);
  }
}

TEST_CASE("perturbation adds eps u to b and eps S to a") {
  const auto base = std::make_shared<LinearField>(Mat(-Mat::Identity(2, 2)), Vec(Vec::Zero(2)),
                                                  Mat(Mat::Identity(2, 2)));
  Mat S(2, 2);
  S << 1.0, 0.2, 0.2, 0.5;
  const auto f = perturb(base, 0.1, vec({1.0, -1.0}), S);
  const Vec x = vec({2.0, 3.0});
  CHECK((f->drift(0.0, x, nullptr) - (-x + 0.1 * vec({1.0, -1.0}))).norm() < 1e-14);
  CHECK((f->diffusion(0.0, x, nullptr) - (Mat::Identity(2, 2) + 0.1 * S)).norm() < 1e-14);
}

TEST_CASE("fields from json") {
  const auto f = field_from_json({{"family", "frozen"}, {"B", -2.0}, {"a", 0.5}, {"c", {1.0}}});
  CHECK(f->dim() == 1);
  CHECK(f->drift(0.0, vec({1.0}), nullptr)(0) == Approx(-1.0));
  CHECK(f->diffusion(0.0, vec({1.0}), nullptr)(0, 0) == Approx(0.5));
  CHECK(field_from_json({{"family", "mean_field_ou"}, {"dim", 2}})->measure_dependent());
  CHECK_NOTHROW(field_from_json({{"family", "exa"}, {"dim", 2}, {"b0", {{"kind", "singular"}, {"c", 0.3}}}}));

  auto message = [](const nlohmann::json& j) {
    try {
      field_from_json(j);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"family", "nope"}}).find("family") != std::string::npos);
  CHECK(message({{"family", "frozen"}, {"a", -1.0}}).find("field.a") != std::string::npos);
  CHECK(message({{"family", "exa"}, {"lambda", 0.0}}).find("lambda") != std::string::npos);
  CHECK(message({{"family", "frozen"}, {"dim", 11}}).find("dim") != std::string::npos);
}

}  // TEST_SUITE
