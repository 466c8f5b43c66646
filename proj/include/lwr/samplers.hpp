#pragma once

// Gradient-free MCMC building blocks: random-walk Metropolis, affine-invariant
// stretch moves restricted to a projected subspace, preconditioned
// Crank-Nicolson moves on the complement, and replica-exchange swaps.

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "lwr/prior.hpp"
#include "lwr/rng.hpp"
#include "lwr/target.hpp"

namespace lwr {

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

/// Gaussian random-walk Metropolis kernel with a fixed proposal covariance.
class RwmKernel {
 public:
  explicit RwmKernel(const Eigen::MatrixXd& proposal_cov);
  /// One Metropolis step; updates x and its cached log-density in place.
  bool step(Eigen::VectorXd& x, double& logpost, const LogDensityFn& target, Rng& rng) const;

 private:
  Eigen::MatrixXd chol_;
};

struct RwmResult {
  Eigen::MatrixXd chain;        ///< n_iters x dim
  std::vector<double> logpost;
  double acceptance_rate = 0.0;
};

RwmResult rwm(const LogDensityFn& logpost, const Eigen::VectorXd& init, const Eigen::MatrixXd& proposal_cov,
              int n_iters, Rng& rng);

/// Stretch factor by inverse CDF of g(z) ~ 1/sqrt(z) on [1/a, a].
double stretch_z(double a, double uniform);
double stretch_z(double a, Rng& rng);

/// Orthogonal projector P onto the subspace moved by stretch moves. The
/// state is split into blocks; each block is projected either by the
/// identity or by J J^T for a basis J with orthonormal columns. Coordinates
/// outside every block are left to other moves (P is zero there).
class BlockProjector {
 public:
  void add_identity(Eigen::Index offset, Eigen::Index size);
  void add_basis(Eigen::Index offset, std::shared_ptr<const Eigen::MatrixXd> basis);

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd complement(const Eigen::VectorXd& v) const { return v - apply(v); }
  /// Dimension of the projected subspace.
  Eigen::Index moved_dimension() const;

 private:
  struct Block {
    Eigen::Index offset;
    Eigen::Index size;
    std::shared_ptr<const Eigen::MatrixXd> basis;  // null: identity
  };
  std::vector<Block> blocks_;
};

struct Walker {
  Eigen::VectorXd state;
  LogDensityParts parts;  ///< cached evaluation of `state`
};

/// Tallies of proposals and acceptances.
struct MoveStats {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
  MoveStats& operator+=(const MoveStats& o) {
    proposed += o.proposed;
    accepted += o.accepted;
    return *this;
  }
};

/// Where every random draw of a sweep comes from: streams keyed by
/// (seed, iteration, temperature, walker, purpose).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t temperature = 0;

  Rng rng(std::uint64_t walker, std::uint64_t purpose) const {
    return make_stream(seed, {iteration, temperature, walker, purpose});
  }
};

enum class EnsembleSplit {
  Sequential,  ///< update walkers one after another against the live ensemble
  Halves,      ///< update each half against the frozen other half (parallel)
};

struct AiesOptions {
  double a = 2.0;
  EnsembleSplit split = EnsembleSplit::Sequential;
  int threads = 1;
};

/// One stretch proposal record, for diagnostics.
struct StretchTrace {
  double z;
  bool accepted;
};

/// x_i + (1 - z) P (x_j - x_i).
Eigen::VectorXd stretch_proposal(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_j, double z,
                                 const BlockProjector& projector);

/// min{1, z^(D-1) exp(logpi_new - logpi_old)}.
double stretch_acceptance(double z, Eigen::Index moved_dim, double logpi_new, double logpi_old);

/// One sweep of stretch moves over the ensemble at inverse temperature beta.
MoveStats aies_update(std::vector<Walker>& ensemble, const BlockProjector& projector, const Target& target,
                      double beta, const AiesOptions& options, const StreamKey& key,
                      std::vector<StretchTrace>* trace = nullptr);

/// Px + Q(sqrt(1 - omega^2) x + omega xi) within one block of basis J.
Eigen::VectorXd pcn_proposal(const Eigen::VectorXd& x, const Eigen::VectorXd& xi, double omega,
                             const Eigen::MatrixXd& basis);

/// The prior-reversible block: coordinates [offset, offset + n) are N(0, C)
/// under `prior`, with KL basis from the same prior.
struct PcnBlock {
  Eigen::Index offset = 0;
  const LogOuPrior* prior = nullptr;
};

/// pCN move on one functional block; accepts with min{1, exp(beta dloglik)}.
bool pcn_update(Walker& walker, const PcnBlock& block, double omega, const Target& target, double beta, Rng& rng);

/// min{1, exp((beta_i - beta_j)(loglik_j - loglik_i))}.
double pt_swap_probability(double beta_i, double beta_j, double loglik_i, double loglik_j);

/// Swaps the two walkers' states with the replica-exchange probability.
bool pt_swap(Walker& at_i, Walker& at_j, double beta_i, double beta_j, Rng& rng);

/// Mean of min{1, exp((b_cold - b_hot)(l_hot - l_cold))} over paired
/// pilot samples of the untempered log-likelihood.
double estimated_swap_rate(const std::vector<double>& loglik_cold, const std::vector<double>& loglik_hot,
                           double beta_cold, double beta_hot);

/// Untempered log-likelihood samples from a short run at inverse
/// temperature beta.
using PilotFn = std::function<std::vector<double>(double beta, Rng& rng)>;

struct TuneOptions {
  int n_temperatures = 4;
  double base_beta = 1.0;        ///< coldest inverse temperature
  double target_swap = 0.23;
  double tolerance = 0.02;
  double min_ratio = 1e-3;       ///< smallest beta_2 / beta_1 searched
  int max_bisections = 40;
};

struct TunedSchedule {
  std::vector<double> betas;
  double ratio = 0.0;             ///< beta_{k+1} / beta_k
  double pilot_swap_rate = 0.0;   ///< estimated for the first pair
  bool fallback = false;
};

/// Inverse temperatures used when pilot tuning fails.
std::vector<double> fallback_schedule();

/// Finds beta_2 whose pilot swap rate with base_beta hits the target and
/// extends the ratio geometrically.
TunedSchedule tune_schedule(const PilotFn& pilot, const TuneOptions& options, Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `threads` threads. The first
/// exception thrown by any task is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace lwr
