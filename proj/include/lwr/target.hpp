#pragma once

#include <limits>

#include <Eigen/Dense>

namespace lwr {

/// Log-likelihood and log-prior of one state, kept separate so tempering can
/// scale the likelihood alone.
struct LogDensityParts {
  double loglik = 0.0;
  double logprior = 0.0;

  bool finite() const { return logprior > -std::numeric_limits<double>::infinity() &&
                               loglik > -std::numeric_limits<double>::infinity(); }
  /// beta * loglik + logprior, -inf if either part is.
  double tempered(double beta) const {
    if (!finite()) return -std::numeric_limits<double>::infinity();
    return beta * loglik + logprior;
  }
};

/// An unnormalized posterior over a flat state vector. Implementations must
/// be safe to call concurrently and deterministic.
class Target {
 public:
  virtual ~Target() = default;
  virtual Eigen::Index dim() const = 0;
  virtual LogDensityParts evaluate(const Eigen::VectorXd& state) const = 0;
};

}  // namespace lwr
