#include "mkvlab/psi_modulus.hpp"

#include "mkvlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mkvlab {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

PsiModulus PsiModulus::power(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("power modulus needs alpha in (0, 1], got " + format_number(alpha));
  return PsiModulus(Family::power, alpha, "r^" + format_number(alpha));
}

PsiModulus PsiModulus::linear() { return PsiModulus(Family::linear, 0.0, "r"); }

PsiModulus PsiModulus::constant(double c) {
  if (!(c > 0.0 && std::isfinite(c)))
    throw std::invalid_argument("constant modulus needs c > 0, got " + format_number(c));
  return PsiModulus(Family::constant, c, format_number(c));
}

PsiModulus PsiModulus::log_reciprocal(double beta) {
  if (!(beta > 0.0 && std::isfinite(beta)))
    throw std::invalid_argument("log_reciprocal modulus needs beta > 0, got " +
                                format_number(beta));
  PsiModulus psi(Family::log_reciprocal, beta,
                 "log(e^" + format_number(beta + 1.0) + " + 1/r)^-" + format_number(beta));
  // Concavity on all of (0, inf) requires the offset inside the log to be at
  // least e^{beta+1}.
  psi.log_offset_ = std::exp(beta + 1.0);
  return psi;
}

PsiModulus PsiModulus::tabulated(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw std::invalid_argument("tabulated modulus needs at least two knots");
  if (knots.front().first != 0.0)
    throw std::invalid_argument("tabulated modulus must start at r = 0");
  double prev_slope = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const auto [r, v] = knots[i];
    if (!std::isfinite(r) || !std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("tabulated modulus has a non-finite or negative knot");
    if (i == 0) continue;
    const auto [r0, v0] = knots[i - 1];
    if (!(r > r0)) throw std::invalid_argument("tabulated knots must be strictly increasing in r");
    if (v < v0) throw std::invalid_argument("tabulated modulus is not nondecreasing");
    if (!(v > 0.0)) throw std::invalid_argument("tabulated modulus must be positive for r > 0");
    const double slope = (v - v0) / (r - r0);
    if (slope > prev_slope + 1e-12 * std::max(1.0, std::abs(prev_slope)))
      throw std::invalid_argument("tabulated modulus is not concave at knot " + std::to_string(i));
    prev_slope = slope;
  }
  PsiModulus psi(Family::tabulated, 0.0,
                 "tabulated(" + std::to_string(knots.size()) + " knots)");
  psi.knots_ = std::move(knots);
  return psi;
}

double PsiModulus::operator()(double r) const {
  if (!(r >= 0.0)) throw std::domain_error("psi evaluated at negative or NaN r");
  switch (family_) {
    case Family::power:
      return r == 0.0 ? 0.0 : std::pow(r, param_);
    case Family::linear:
      return r;
    case Family::constant:
      return param_;
    case Family::log_reciprocal: {
      if (r == 0.0) return 0.0;
      if (std::isinf(r)) return std::pow(std::log(log_offset_), -param_);
      // log(c + 1/r) = -log r + log1p(c r), stable for tiny r.
      const double l = -std::log(r) + std::log1p(log_offset_ * r);
      return std::pow(l, -param_);
    }
    case Family::tabulated: {
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), r,
                                       [](double x, const auto& k) { return x < k.first; });
      std::size_t hi = static_cast<std::size_t>(it - knots_.begin());
      if (hi >= knots_.size()) hi = knots_.size() - 1;
      const auto [r0, v0] = knots_[hi - 1];
      const auto [r1, v1] = knots_[hi];
      const double slope = std::max(0.0, (v1 - v0) / (r1 - r0));
      return v0 + slope * (r - r0);
    }
  }
  return 0.0;
}

double PsiModulus::at_zero() const {
  switch (family_) {
    case Family::constant:
      return param_;
    case Family::tabulated:
      return knots_.front().second;
    default:
      return 0.0;
  }
}

std::string to_string(PsiModulus::Family family) {
  switch (family) {
    case PsiModulus::Family::power:
      return "power";
    case PsiModulus::Family::linear:
      return "linear";
    case PsiModulus::Family::constant:
      return "constant";
    case PsiModulus::Family::log_reciprocal:
      return "log_reciprocal";
    case PsiModulus::Family::tabulated:
      return "tabulated";
  }
  return "unknown";
}

nlohmann::json PsiModulus::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  switch (family_) {
    case Family::power:
      params["alpha"] = param_;
      break;
    case Family::constant:
      params["c"] = param_;
      break;
    case Family::log_reciprocal:
      params["beta"] = param_;
      break;
    case Family::tabulated: {
      auto arr = nlohmann::json::array();
      for (const auto& [r, v] : knots_) arr.push_back({r, v});
      params["knots"] = arr;
      break;
    }
    case Family::linear:
      break;
  }
  return {{"family", to_string(family_)}, {"params", params}};
}

PsiModulus PsiModulus::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family") || !j["family"].is_string())
    throw std::invalid_argument("psi: expected an object with a string 'family'");
  const std::string family = j["family"];
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  auto number = [&](const char* key) {
    if (!params.contains(key) || !params[key].is_number())
      throw std::invalid_argument(std::string("psi.params.") + key + ": missing or not a number");
    return params[key].get<double>();
  };
  if (family == "power") return power(number("alpha"));
  if (family == "linear") return linear();
  if (family == "constant") return constant(number("c"));
  if (family == "log_reciprocal") return log_reciprocal(number("beta"));
  if (family == "tabulated") {
    if (!params.contains("knots") || !params["knots"].is_array())
      throw std::invalid_argument("psi.params.knots: expected an array of [r, value] pairs");
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : params["knots"]) {
      if (!k.is_array() || k.size() != 2)
        throw std::invalid_argument("psi.params.knots: each knot must be [r, value]");
      knots.emplace_back(k[0].get<double>(), k[1].get<double>());
    }
    return tabulated(std::move(knots));
  }
  throw std::invalid_argument("psi.family: unknown family '" + family + "'");
}

namespace {

constexpr int kDecades = 8;  // cutoffs 1e-1 .. 1e-8

template <class Integrand>
IntegralVerdict log_scale_integral(const Integrand& g, double lower_cutoff) {
  if (!(lower_cutoff > 0.0 && lower_cutoff < 1.0))
    throw std::domain_error("lower cutoff must lie in (0, 1)");
  // Substituting s = e^u turns the integrand g(s)/s ds into g(e^u) du.
  auto in_log = [&](double u) { return g(std::exp(u)); };
  const double ln10 = std::log(10.0);

  IntegralVerdict out;
  out.value = adaptive_simpson(in_log, std::log(lower_cutoff), 0.0, 1e-9);

  const double first_decade = adaptive_simpson(in_log, -ln10, 0.0, 1e-10);
  double partial = first_decade;
  for (int j = 1; j < kDecades; ++j) {
    const double d = adaptive_simpson(in_log, -(j + 1) * ln10, -j * ln10, 1e-10);
    out.decade_increments.push_back(d);
    partial += d;
  }
  const double last = out.decade_increments.back();
  const double mid = out.decade_increments[out.decade_increments.size() - 4];
  if (last <= 1e-14) {
    out.diverges = false;
    out.limit_estimate = partial;
    return out;
  }
  const double decay = mid > 0.0 ? std::cbrt(last / mid) : 1.0;
  // Per-decade contributions that shrink by less than 10% per decade are
  // treated as a non-summable tail.
  out.diverges = decay >= 0.9;
  out.limit_estimate = out.diverges ? std::numeric_limits<double>::infinity()
                                    : partial + last * decay / (1.0 - decay);
  return out;
}

}  // namespace

IntegralVerdict dini_integral(const PsiModulus& psi, double lower_cutoff) {
  return log_scale_integral([&](double s) { return psi(s); }, lower_cutoff);
}

IntegralVerdict square_dini_integral(const PsiModulus& psi, double lower_cutoff) {
  return log_scale_integral(
      [&](double s) {
        const double v = psi(s);
        return v * v;
      },
      lower_cutoff);
}

bool log_vanishing_check(const PsiModulus& psi) {
  double first = 0.0, prev = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= 12; ++n) {
    const double r = std::pow(10.0, -n);
    const double p = psi(r);
    const double v = p * p * std::log1p(1.0 / r);
    if (n == 1) first = v;
    if (!(v < prev)) return false;
    prev = v;
  }
  return prev < 1e-3 * first;
}

double continuity_modulus(const std::vector<SampledValue>& samples, const PsiModulus& psi) {
  if (samples.size() < 2) throw std::invalid_argument("continuity_modulus needs >= 2 samples");
  double best = 0.0;
  bool distinct_pair = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      if (samples[i].point.size() != samples[j].point.size())
        throw std::invalid_argument("continuity_modulus: points differ in dimension");
      const double dist = (samples[i].point - samples[j].point).norm();
      const double diff = std::abs(samples[i].value - samples[j].value);
      if (dist <= 1e-12) {
        if (diff > 1e-12)
          throw std::invalid_argument("continuity_modulus: duplicate point with differing values");
        continue;
      }
      distinct_pair = true;
      best = std::max(best, diff / psi(dist));
    }
  }
  if (!distinct_pair) throw std::invalid_argument("continuity_modulus needs >= 2 distinct points");
  return best;
}

}  // namespace mkvlab
