#pragma once

// log-OU Gaussian-process prior for boundary densities. The log of a
// boundary density series, centred by a log-mean curve mu(t), is a
// stationary Ornstein-Uhlenbeck process dX = -beta X dt + sigma dW sampled on
// a regular grid. Everything the samplers touch lives in X ("x-space").

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lwr/rng.hpp"

namespace lwr {

struct OuParams {
  double beta = 0.22;   ///< mean reversion, 1/min
  double sigma = 0.256; ///< diffusivity, 1/sqrt(min)
  double dt = 1.0;      ///< sample spacing, min

  double stationary_variance() const { return sigma * sigma / (2.0 * beta); }
  /// Correlation between neighbouring samples, exp(-beta dt).
  double lag_correlation() const;
  /// Variance of X_{k+1} - phi X_k.
  double innovation_variance() const;
  void validate() const;
};

/// Dense stationary covariance C[s,t] = sigma^2/(2 beta) exp(-beta dt |s-t|).
Eigen::MatrixXd ou_covariance(const OuParams& ou, std::size_t n);

/// Inverse of ou_covariance: tridiagonal AR(1) precision, stored dense.
Eigen::MatrixXd ou_precision(const OuParams& ou, std::size_t n);

/// x^T C^{-1} x in O(n) via the AR(1) factorization.
double ou_quadratic_form(const OuParams& ou, std::span<const double> x);

/// Full Gaussian log-density log N(x; 0, C) in O(n).
double ou_log_density(const OuParams& ou, std::span<const double> x);

/// Maps standard-normal innovations to an exact OU path with stationary
/// start: x_0 = sd z_0, x_k = phi x_{k-1} + s z_k.
void ou_from_innovations(const OuParams& ou, std::span<const double> z, std::span<double> x);

std::vector<double> sample_ou(const OuParams& ou, std::size_t n, Rng& rng);

/// Leading eigenpairs of a covariance matrix in descending order.
struct KlBasis {
  Eigen::MatrixXd vectors;  ///< n x M, orthonormal columns
  Eigen::VectorXd values;   ///< M eigenvalues, non-increasing
};

/// Top-M eigenvectors of a symmetric positive-definite matrix. Each vector
/// is signed so its first non-negligible component is positive.
KlBasis kl_decompose(const Eigen::MatrixXd& cov, int truncation);

/// A boundary density series together with its OU coordinates.
struct BoundaryCondition {
  Eigen::VectorXd x;
  std::vector<double> density;
};

class LogOuPrior {
 public:
  /// Builds the covariance on mu's grid (spacing ou.dt) and its KL basis.
  LogOuPrior(Eigen::VectorXd mu, OuParams ou, int truncation);
  /// Shares a basis computed for the same (ou, n).
  LogOuPrior(Eigen::VectorXd mu, OuParams ou, std::shared_ptr<const KlBasis> basis);

  std::size_t size() const { return static_cast<std::size_t>(mu_.size()); }
  const Eigen::VectorXd& mu() const { return mu_; }
  const OuParams& ou() const { return ou_; }
  const KlBasis& basis() const { return *basis_; }
  std::shared_ptr<const KlBasis> shared_basis() const { return basis_; }
  int truncation() const { return static_cast<int>(basis_->vectors.cols()); }

  /// x ~ N(0, C) by the AR(1) recursion.
  Eigen::VectorXd sample_x(Rng& rng) const;
  BoundaryCondition sample(Rng& rng) const;
  BoundaryCondition make_bc(Eigen::VectorXd x) const;

  /// exp(mu + x).
  std::vector<double> density(const Eigen::VectorXd& x) const;
  void density(const Eigen::VectorXd& x, std::vector<double>& out) const;
  /// log(density) - mu. Throws DataError on non-positive densities.
  Eigen::VectorXd to_x(std::span<const double> density) const;

  /// -x^T C^{-1} x / 2; the normalizing constant is omitted.
  double log_density(const Eigen::VectorXd& x) const;

  /// P x = J J^T x (low-wavenumber part) and Q x = x - P x.
  Eigen::VectorXd project_low(const Eigen::VectorXd& x) const;
  Eigen::VectorXd project_high(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mu_;
  OuParams ou_;
  std::shared_ptr<const KlBasis> basis_;
};

/// Pointwise mean of log-curves smoothed by a centred moving average of
/// `window` samples (truncated at the ends). Throws DataError on
/// non-positive densities or ragged input.
std::vector<double> fit_log_mean(const std::vector<std::vector<double>>& curves, int window = 5);

/// Log-likelihood of centred curves under OU(beta, sigma) with the given
/// spacing: sum_i [ (1/2) log|Lambda| - (1/2) X_i^T Lambda X_i ] + const.
double ou_fit_loglik(const std::vector<std::vector<double>>& centred, double beta, double sigma, double dt);

struct FitOuOptions {
  int iterations = 20000;
  int burn_in = 5000;       ///< discarded; proposal scales adapt here
  double dt = 1.0;
  double sigma_floor = 1e-6;
};

struct FitOuResult {
  std::vector<std::pair<double, double>> chain;  ///< (beta, sigma) after burn-in
  double acceptance_rate = 0.0;
  double mean_beta = 0.0;
  double mean_sigma = 0.0;
};

/// Random-walk Metropolis over (beta, sigma) with a flat prior on the
/// positive quadrant. `log_curves` are log-density curves; `mu` is
/// subtracted before fitting.
FitOuResult fit_ou(const std::vector<std::vector<double>>& log_curves, const std::vector<double>& mu,
                   const FitOuOptions& options, Rng& rng);

/// Linear resampling of a curve given on spacing `from` onto `n` points of
/// spacing `to`, both grids starting at 0. Holds the last value past the end.
std::vector<double> resample_linear(std::span<const double> values, double from, double to, std::size_t n);

/// log-mean curve whose exponential interpolates (time, density) knots
/// piecewise-linearly in log space, on n points of spacing dt.
std::vector<double> piecewise_log_mean(const std::vector<std::pair<double, double>>& knots, double dt, std::size_t n);

}  // namespace lwr
