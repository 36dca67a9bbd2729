#include "mkvlab/psi_modulus.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mkvlab;

TEST_SUITE("psi_modulus") {

TEST_CASE("evaluation of the built-in families") {
  CHECK(PsiModulus::power(1.0)(0.5) == doctest::Approx(0.5));
  CHECK(PsiModulus::constant(2.0)(7.3) == 2.0);
  CHECK(PsiModulus::power(0.5)(4.0) == doctest::Approx(2.0));
  CHECK(PsiModulus::linear()(3.25) == 3.25);
  CHECK(PsiModulus::power(0.5)(0.0) == 0.0);
  CHECK(PsiModulus::constant(2.0).at_zero() == 2.0);
  CHECK(PsiModulus::linear().at_zero() == 0.0);
}

TEST_CASE("invalid arguments are rejected") {
  CHECK_THROWS_AS(PsiModulus::power(0.0), std::invalid_argument);
  CHECK_THROWS_AS(PsiModulus::power(1.5), std::invalid_argument);
  CHECK_THROWS_AS(PsiModulus::constant(0.0), std::invalid_argument);
  CHECK_THROWS_AS(PsiModulus::linear()(-1.0), std::domain_error);
  CHECK_THROWS_AS(PsiModulus::linear()(NAN), std::domain_error);
  CHECK_THROWS(PsiModulus::tabulated({{0.0, 0.0}, {1.0, 1.0}, {2.0, 3.0}}));  // convex kink
  CHECK_THROWS(PsiModulus::tabulated({{0.5, 0.0}, {1.0, 1.0}}));              // must start at 0
}

TEST_CASE("tabulated modulus interpolates between knots") {
  const auto psi = PsiModulus::tabulated({{0.0, 0.0}, {1.0, 1.0}, {3.0, 2.0}});
  CHECK(psi(0.5) == doctest::Approx(0.5));
  CHECK(psi(2.0) == doctest::Approx(1.5));
  CHECK(psi(10.0) == doctest::Approx(2.0 + 7.0 * 0.5));  // last slope continues
}

TEST_CASE("json round trip keeps the values") {
  for (const auto& psi : {PsiModulus::power(0.3), PsiModulus::linear(), PsiModulus::constant(2.0),
                          PsiModulus::log_reciprocal(1.0),
                          PsiModulus::tabulated({{0.0, 0.0}, {1.0, 2.0}, {2.0, 3.0}})}) {
    const auto back = PsiModulus::from_json(psi.to_json());
    CHECK(back.family() == psi.family());
    for (double r : {0.0, 1e-6, 0.3, 1.0, 5.0}) CHECK(back(r) == doctest::Approx(psi(r)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(PsiModulus::from_json({{"family", "cubic"}}), std::invalid_argument);
  CHECK_THROWS_AS(PsiModulus::from_json({{"family", "power"}}), std::invalid_argument);
}

TEST_CASE("Dini integrals") {
  const auto sqrt_psi = dini_integral(PsiModulus::power(0.5), 1e-12);
  CHECK_FALSE(sqrt_psi.diverges);
  CHECK(sqrt_psi.limit_estimate == doctest::Approx(2.0).epsilon(1e-4));
  const auto lin = dini_integral(PsiModulus::linear(), 1e-12);
  CHECK_FALSE(lin.diverges);
  CHECK(lin.limit_estimate == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(dini_integral(PsiModulus::constant(2.0), 1e-12).diverges);

  const auto sq = square_dini_integral(PsiModulus::power(0.5), 1e-12);
  CHECK_FALSE(sq.diverges);
  CHECK(sq.limit_estimate == doctest::Approx(1.0).epsilon(1e-6));
  const auto sq_lin = square_dini_integral(PsiModulus::linear(), 1e-12);
  CHECK(sq_lin.limit_estimate == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(square_dini_integral(PsiModulus::constant(2.0), 1e-12).diverges);
}

TEST_CASE("cutoff value matches the antiderivative") {
  // int_c^1 s^{-1/2} ds = 2 (1 - sqrt c)
  const double c = 1e-4;
  CHECK(dini_integral(PsiModulus::power(0.5), c).value == doctest::Approx(2.0 * (1.0 - std::sqrt(c))).epsilon(1e-8));
  CHECK_THROWS(dini_integral(PsiModulus::linear(), 0.0));
}

TEST_CASE("log vanishing check") {
  CHECK(log_vanishing_check(PsiModulus::power(0.5)));
  CHECK(log_vanishing_check(PsiModulus::linear()));
  CHECK_FALSE(log_vanishing_check(PsiModulus::constant(2.0)));
}

TEST_CASE("discrete continuity modulus") {
  auto sample = [](double x, double v) { return SampledValue{Eigen::VectorXd::Constant(1, x), v}; };
  CHECK(continuity_modulus({sample(0, 0), sample(1, 1), sample(2, 2)}, PsiModulus::linear()) ==
        doctest::Approx(1.0));
  CHECK(continuity_modulus({sample(0, 3), sample(1, 3), sample(2, 3)}, PsiModulus::power(0.5)) == 0.0);
  CHECK(continuity_modulus({sample(0, 0), sample(1, 1), sample(4, 2)}, PsiModulus::power(0.5)) ==
        doctest::Approx(1.0));
}

TEST_CASE("property: every family is nondecreasing, concave and positive off zero") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (const auto& psi : {PsiModulus::power(0.25), PsiModulus::power(0.9), PsiModulus::linear(),
                          PsiModulus::constant(2.0), PsiModulus::log_reciprocal(0.5),
                          PsiModulus::log_reciprocal(2.0),
                          PsiModulus::tabulated({{0.0, 0.0}, {0.5, 1.0}, {2.0, 1.5}})}) {
    for (int i = 0; i < 500; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      if (b - a < 1e-9) continue;
      CHECK(psi(b) + 1e-12 >= psi(a));
      if (a > 0.0) CHECK(psi(a) > 0.0);
      // midpoint concavity
      CHECK(psi(0.5 * (a + b)) + 1e-12 >= 0.5 * (psi(a) + psi(b)));
    }
  }
}

}  // TEST_SUITE
