#pragma once

#include <span>
#include <vector>

namespace lwr {

/// Sample autocovariance at `lag` (divisor n).
double autocovariance(std::span<const double> x, std::size_t lag);

/// Effective sample size from the autocorrelation function, summed with
/// Geyer's initial positive sequence. A constant chain has ESS 1.
double effective_sample_size(std::span<const double> x);

/// Linear-interpolation quantile of unsorted values, p in [0, 1].
double quantile(std::vector<double> values, double p);

struct Interval {
  double lower;
  double upper;
  bool contains(double v) const { return lower <= v && v <= upper; }
};

/// Equal-tailed credible interval with the given mass.
Interval credible_interval(const std::vector<double>& values, double mass);

}  // namespace lwr
