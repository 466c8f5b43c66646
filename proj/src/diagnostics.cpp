#include "lwr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lwr/errors.hpp"

namespace lwr {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double autocov_centred(std::span<const double> x, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace

double autocovariance(std::span<const double> x, std::size_t lag) {
  if (x.empty()) throw DomainError("autocovariance: empty series");
  return autocov_centred(x, mean_of(x), lag);
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw DomainError("effective_sample_size: empty chain");
  if (n < 3) return static_cast<double>(n);
  const double m = mean_of(x);
  const double c0 = autocov_centred(x, m, 0);
  if (!(c0 > 1e-300 * (1.0 + m * m))) return 1.0;

  // Pairs Gamma_k = rho(2k) + rho(2k+1) are summed while positive and
  // forced to be non-increasing.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov_centred(x, m, 2 * k) + autocov_centred(x, m, 2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return std::min(static_cast<double>(n) / tau, static_cast<double>(n) * std::log10(static_cast<double>(n)));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile: p outside [0, 1]");
  std::ranges::sort(values);
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Interval credible_interval(const std::vector<double>& values, double mass) {
  if (!(mass > 0.0 && mass < 1.0)) throw DomainError("credible_interval: mass outside (0, 1)");
  const double tail = 0.5 * (1.0 - mass);
  return {quantile(values, tail), quantile(values, 1.0 - tail)};
}

}  // namespace lwr
