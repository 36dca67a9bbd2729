#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace mkvlab::stats {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept. Needs >= 2 distinct x.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// fit_line on (log x, log y); all values must be positive.
LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap: `statistic` receives resampled indices into [0, n).
Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      int resamples, double level, std::uint64_t seed);

/// Bootstrap interval of the log-log slope, resampling (x, y) pairs.
Interval bootstrap_slope_ci(const std::vector<double>& x, const std::vector<double>& y,
                            int resamples = 1000, double level = 0.95, std::uint64_t seed = 0);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double variance = 0.0;  ///< unbiased sample variance
};

MeanSe mean_se(const std::vector<double>& values);

/// Standard error of the unbiased sample variance, sqrt((m4 - s^4 (n-3)/(n-1)) / n).
double variance_se(const std::vector<double>& values);

}  // namespace mkvlab::stats
