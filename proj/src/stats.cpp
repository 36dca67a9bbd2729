#include "mkvlab/stats.hpp"

#include "mkvlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mkvlab::stats {

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_line: size mismatch");
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) throw std::invalid_argument("fit_line: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("fit_loglog: values must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

Interval bootstrap_ci(std::size_t n,
                      const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      int resamples, double level, std::uint64_t seed) {
  if (n == 0 || resamples < 1) throw std::invalid_argument("bootstrap_ci: empty input");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level in (0, 1)");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < resamples; ++b) {
    PathStream rng(seed, static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& i : idx) i = pick(rng);
    const double v = statistic(idx);
    if (std::isfinite(v)) values.push_back(v);
  }
  if (values.empty()) throw std::runtime_error("bootstrap_ci: no finite resample");
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  return {q(tail), q(1.0 - tail)};
}

Interval bootstrap_slope_ci(const std::vector<double>& x, const std::vector<double>& y,
                            int resamples, double level, std::uint64_t seed) {
  if (x.size() != y.size()) throw std::invalid_argument("bootstrap_slope_ci: size mismatch");
  return bootstrap_ci(
      x.size(),
      [&](const std::vector<std::size_t>& idx) {
        std::vector<double> bx, by;
        for (auto i : idx) {
          bx.push_back(x[i]);
          by.push_back(y[i]);
        }
        try {
          return fit_loglog(bx, by).slope;
        } catch (const std::invalid_argument&) {
          return std::numeric_limits<double>::quiet_NaN();
        }
      },
      resamples, level, seed);
}

MeanSe mean_se(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("mean_se: need at least 2 values");
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / (n - 1.0);
  return {mean, std::sqrt(var / n), var};
}

double variance_se(const std::vector<double>& values) {
  const MeanSe m = mean_se(values);
  const auto n = static_cast<double>(values.size());
  double m4 = 0.0;
  for (double v : values) m4 += std::pow(v - m.mean, 4);
  m4 /= n;
  const double s4 = m.variance * m.variance;
  return std::sqrt(std::max(0.0, (m4 - s4 * (n - 3.0) / (n - 1.0)) / n));
}

}  // namespace mkvlab::stats
