#include "lwr/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lwr/errors.hpp"

namespace lwr {

double OuParams::lag_correlation() const { return std::exp(-beta * dt); }

double OuParams::innovation_variance() const {
  // v0 (1 - phi^2) = v0 (1 - exp(-2 beta dt)); expm1 keeps precision for small beta dt.
  return -stationary_variance() * std::expm1(-2.0 * beta * dt);
}

void OuParams::validate() const {
  if (!(beta > 0.0) || !(sigma > 0.0) || !(dt > 0.0) || !std::isfinite(beta + sigma + dt)) {
    throw ConfigError("OU parameters require beta > 0, sigma > 0, dt > 0");
  }
}

Eigen::MatrixXd ou_covariance(const OuParams& ou, std::size_t n) {
  ou.validate();
  if (n < 2) throw DomainError("ou_covariance needs n >= 2");
  const double v0 = ou.stationary_variance();
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd c(m, m);
  for (Eigen::Index s = 0; s < m; ++s) {
    for (Eigen::Index t = 0; t < m; ++t) {
      c(s, t) = v0 * std::exp(-ou.beta * ou.dt * static_cast<double>(std::abs(s - t)));
    }
  }
  return c;
}

Eigen::MatrixXd ou_precision(const OuParams& ou, std::size_t n) {
  ou.validate();
  if (n < 2) throw DomainError("ou_precision needs n >= 2");
  const double phi = ou.lag_correlation();
  const double v = ou.innovation_variance();
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const bool end = (k == 0 || k == m - 1);
    p(k, k) = (end ? 1.0 : 1.0 + phi * phi) / v;
    if (k + 1 < m) {
      p(k, k + 1) = -phi / v;
      p(k + 1, k) = -phi / v;
    }
  }
  return p;
}

double ou_quadratic_form(const OuParams& ou, std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double phi = ou.lag_correlation();
  const double v = ou.innovation_variance();
  double acc = x[0] * x[0] / ou.stationary_variance();
  double innov = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const double e = x[k] - phi * x[k - 1];
    innov += e * e;
  }
  return acc + innov / v;
}

double ou_log_density(const OuParams& ou, std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  const double log_det = std::log(ou.stationary_variance()) + (n - 1.0) * std::log(ou.innovation_variance());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + ou_quadratic_form(ou, x));
}

void ou_from_innovations(const OuParams& ou, std::span<const double> z, std::span<double> x) {
  if (z.size() != x.size()) throw DomainError("ou_from_innovations: size mismatch");
  if (x.empty()) return;
  const double phi = ou.lag_correlation();
  const double s = std::sqrt(ou.innovation_variance());
  x[0] = std::sqrt(ou.stationary_variance()) * z[0];
  for (std::size_t k = 1; k < x.size(); ++k) x[k] = phi * x[k - 1] + s * z[k];
}

std::vector<double> sample_ou(const OuParams& ou, std::size_t n, Rng& rng) {
  std::vector<double> z(n);
  for (auto& v : z) v = std_normal(rng);
  std::vector<double> x(n);
  ou_from_innovations(ou, z, x);
  return x;
}

KlBasis kl_decompose(const Eigen::MatrixXd& cov, int truncation) {
  const Eigen::Index n = cov.rows();
  if (cov.cols() != n || n == 0) throw DomainError("kl_decompose: covariance must be square");
  if (truncation < 1 || truncation > n) throw DomainError("kl_decompose: truncation must lie in [1, n]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the prior covariance failed");

  KlBasis basis;
  basis.vectors.resize(n, truncation);
  basis.values.resize(truncation);
  for (int m = 0; m < truncation; ++m) {
    const Eigen::Index src = n - 1 - m;  // ascending order from Eigen
    const double lambda = eig.eigenvalues()(src);
    if (!(lambda > 0.0)) throw NumericalError("covariance is not positive definite");
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-8 * scale) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    basis.vectors.col(m) = v;
    basis.values(m) = lambda;
  }
  return basis;
}

LogOuPrior::LogOuPrior(Eigen::VectorXd mu, OuParams ou, int truncation) : mu_(std::move(mu)), ou_(ou) {
  ou_.validate();
  basis_ = std::make_shared<const KlBasis>(kl_decompose(ou_covariance(ou_, size()), truncation));
}

LogOuPrior::LogOuPrior(Eigen::VectorXd mu, OuParams ou, std::shared_ptr<const KlBasis> basis)
    : mu_(std::move(mu)), ou_(ou), basis_(std::move(basis)) {
  ou_.validate();
  if (!basis_ || basis_->vectors.rows() != mu_.size()) throw ConfigError("KL basis does not match the prior grid");
}

Eigen::VectorXd LogOuPrior::sample_x(Rng& rng) const {
  const std::vector<double> x = sample_ou(ou_, size(), rng);
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

BoundaryCondition LogOuPrior::sample(Rng& rng) const { return make_bc(sample_x(rng)); }

BoundaryCondition LogOuPrior::make_bc(Eigen::VectorXd x) const {
  if (x.size() != mu_.size()) throw DomainError("BC coordinates do not match the prior grid");
  BoundaryCondition bc;
  bc.density = density(x);
  bc.x = std::move(x);
  return bc;
}

std::vector<double> LogOuPrior::density(const Eigen::VectorXd& x) const {
  std::vector<double> out;
  density(x, out);
  return out;
}

void LogOuPrior::density(const Eigen::VectorXd& x, std::vector<double>& out) const {
  out.resize(size());
  for (Eigen::Index i = 0; i < mu_.size(); ++i) out[i] = std::exp(mu_(i) + x(i));
}

Eigen::VectorXd LogOuPrior::to_x(std::span<const double> density) const {
  if (density.size() != size()) throw DataError("density series does not match the prior grid");
  Eigen::VectorXd x(mu_.size());
  for (Eigen::Index i = 0; i < mu_.size(); ++i) {
    if (!(density[i] > 0.0)) throw DataError("boundary densities must be strictly positive");
    x(i) = std::log(density[i]) - mu_(i);
  }
  return x;
}

double LogOuPrior::log_density(const Eigen::VectorXd& x) const {
  return -0.5 * ou_quadratic_form(ou_, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

Eigen::VectorXd LogOuPrior::project_low(const Eigen::VectorXd& x) const {
  return basis_->vectors * (basis_->vectors.transpose() * x);
}

Eigen::VectorXd LogOuPrior::project_high(const Eigen::VectorXd& x) const { return x - project_low(x); }

std::vector<double> fit_log_mean(const std::vector<std::vector<double>>& curves, int window) {
  if (curves.empty()) throw DataError("fit_log_mean needs at least one curve");
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  const std::size_t n = curves.front().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& c : curves) {
    if (c.size() != n) throw DataError("curves must share a common time grid");
    for (std::size_t t = 0; t < n; ++t) {
      if (!(c[t] > 0.0)) throw DataError("density curves must be strictly positive to take logs");
      mean[t] += std::log(c[t]);
    }
  }
  for (auto& m : mean) m /= static_cast<double>(curves.size());

  const int half = window / 2;
  std::vector<double> smooth(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= static_cast<std::size_t>(half) ? t - half : 0;
    const std::size_t hi = std::min(n - 1, t + static_cast<std::size_t>(window - 1 - half));
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) acc += mean[k];
    smooth[t] = acc / static_cast<double>(hi - lo + 1);
  }
  return smooth;
}

double ou_fit_loglik(const std::vector<std::vector<double>>& centred, double beta, double sigma, double dt) {
  const OuParams ou{beta, sigma, dt};
  const double log_v0 = std::log(ou.stationary_variance());
  const double log_v = std::log(ou.innovation_variance());
  double total = 0.0;
  for (const auto& x : centred) {
    const auto n = static_cast<double>(x.size());
    const double half_log_det_precision = -0.5 * (log_v0 + (n - 1.0) * log_v);
    total += half_log_det_precision - 0.5 * ou_quadratic_form(ou, x);
  }
  return total;
}

FitOuResult fit_ou(const std::vector<std::vector<double>>& log_curves, const std::vector<double>& mu,
                   const FitOuOptions& options, Rng& rng) {
  if (log_curves.size() < 2) throw DataError("fit_ou needs at least two curves");
  if (options.iterations <= options.burn_in || options.burn_in < 0) {
    throw ConfigError("fit_ou: iterations must exceed burn_in");
  }
  std::vector<std::vector<double>> centred = log_curves;
  for (auto& c : centred) {
    if (c.size() != mu.size()) throw DataError("curve length does not match the fitted mean");
    for (std::size_t t = 0; t < c.size(); ++t) c[t] -= mu[t];
  }

  // Moment estimates for the starting point and proposal scale.
  double var = 0.0, lag = 0.0, count = 0.0, lag_count = 0.0;
  for (const auto& c : centred) {
    for (std::size_t t = 0; t < c.size(); ++t) {
      var += c[t] * c[t];
      count += 1.0;
      if (t > 0) {
        lag += c[t] * c[t - 1];
        lag_count += 1.0;
      }
    }
  }
  var /= count;
  double beta = 1.0;
  double sigma = 1e-3;
  if (var > 0.0) {
    const double rho1 = (lag / lag_count) / var;
    beta = (rho1 > 0.0 && rho1 < 1.0) ? -std::log(rho1) / options.dt : 1.0;
    sigma = std::max(std::sqrt(2.0 * beta * var), 10.0 * options.sigma_floor);
  }

  auto loglik = [&](double b, double s) {
    if (!(b > 0.0) || !(s >= options.sigma_floor)) return -std::numeric_limits<double>::infinity();
    const double l = ou_fit_loglik(centred, b, s, options.dt);
    return std::isfinite(l) ? l : -std::numeric_limits<double>::infinity();
  };

  double current = loglik(beta, sigma);
  double step_beta = 0.02 * beta;
  double step_sigma = 0.02 * sigma;
  FitOuResult result;
  result.chain.reserve(static_cast<std::size_t>(options.iterations - options.burn_in));
  int accepted = 0, window_accepted = 0;
  constexpr int kAdaptEvery = 200;
  for (int it = 0; it < options.iterations; ++it) {
    const double b = beta + step_beta * std_normal(rng);
    const double s = sigma + step_sigma * std_normal(rng);
    const double proposed = loglik(b, s);
    if (std::log(uniform01(rng)) < proposed - current) {
      beta = b;
      sigma = s;
      current = proposed;
      ++window_accepted;
      if (it >= options.burn_in) ++accepted;
    }
    if (it < options.burn_in && (it + 1) % kAdaptEvery == 0) {
      const double rate = static_cast<double>(window_accepted) / kAdaptEvery;
      const double factor = std::exp(rate - 0.25);
      step_beta *= factor;
      step_sigma *= factor;
      window_accepted = 0;
    }
    if (it >= options.burn_in) result.chain.emplace_back(beta, sigma);
  }
  result.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(options.iterations - options.burn_in);
  for (const auto& [b, s] : result.chain) {
    result.mean_beta += b;
    result.mean_sigma += s;
  }
  result.mean_beta /= static_cast<double>(result.chain.size());
  result.mean_sigma /= static_cast<double>(result.chain.size());
  return result;
}

std::vector<double> resample_linear(std::span<const double> values, double from, double to, std::size_t n) {
  if (values.empty()) throw DataError("cannot resample an empty curve");
  std::vector<double> out(n);
  const auto last = static_cast<double>(values.size() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * to / from;
    if (pos >= last) {
      out[i] = values.back();
      continue;
    }
    const auto k = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(k);
    out[i] = values[k] + frac * (values[k + 1] - values[k]);
  }
  return out;
}

std::vector<double> piecewise_log_mean(const std::vector<std::pair<double, double>>& knots, double dt, std::size_t n) {
  if (knots.empty()) throw ConfigError("log-mean curve needs at least one knot");
  for (std::size_t k = 0; k < knots.size(); ++k) {
    if (!(knots[k].second > 0.0)) throw ConfigError("log-mean knots must have positive density");
    if (k > 0 && !(knots[k].first > knots[k - 1].first)) throw ConfigError("log-mean knot times must increase");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (t <= knots.front().first) {
      out[i] = std::log(knots.front().second);
    } else if (t >= knots.back().first) {
      out[i] = std::log(knots.back().second);
    } else {
      std::size_t k = 1;
      while (knots[k].first < t) ++k;
      const auto& [t0, d0] = knots[k - 1];
      const auto& [t1, d1] = knots[k];
      const double w = (t - t0) / (t1 - t0);
      out[i] = (1.0 - w) * std::log(d0) + w * std::log(d1);
    }
  }
  return out;
}

}  // namespace lwr
