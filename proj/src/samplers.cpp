#include "lwr/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lwr/errors.hpp"

namespace lwr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum Purpose : std::uint64_t { kStretch = 11, kPcn = 12 };

}  // namespace

RwmKernel::RwmKernel(const Eigen::MatrixXd& proposal_cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(proposal_cov);
  if (llt.info() != Eigen::Success) throw DomainError("proposal covariance must be symmetric positive definite");
  chol_ = llt.matrixL();
}

bool RwmKernel::step(Eigen::VectorXd& x, double& logpost, const LogDensityFn& target, Rng& rng) const {
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std_normal(rng);
  Eigen::VectorXd proposal = x + chol_ * z;
  const double lp = target(proposal);
  const double u = uniform01(rng);
  if (lp > kNegInf && std::log(u) < lp - logpost) {
    x = std::move(proposal);
    logpost = lp;
    return true;
  }
  return false;
}

RwmResult rwm(const LogDensityFn& logpost, const Eigen::VectorXd& init, const Eigen::MatrixXd& proposal_cov,
              int n_iters, Rng& rng) {
  if (proposal_cov.rows() != init.size() || proposal_cov.cols() != init.size()) {
    throw DomainError("proposal covariance does not match the state dimension");
  }
  const RwmKernel kernel(proposal_cov);
  RwmResult out;
  out.chain.resize(n_iters, init.size());
  out.logpost.reserve(static_cast<std::size_t>(std::max(n_iters, 0)));
  Eigen::VectorXd x = init;
  double lp = logpost(x);
  long accepted = 0;
  for (int it = 0; it < n_iters; ++it) {
    if (kernel.step(x, lp, logpost, rng)) ++accepted;
    out.chain.row(it) = x.transpose();
    out.logpost.push_back(lp);
  }
  out.acceptance_rate = n_iters > 0 ? static_cast<double>(accepted) / n_iters : 0.0;
  return out;
}

double stretch_z(double a, double uniform) {
  if (!(a > 1.0)) throw DomainError("stretch parameter a must exceed 1");
  const double lo = 1.0 / std::sqrt(a);
  const double r = lo + uniform * (std::sqrt(a) - lo);
  return r * r;
}

double stretch_z(double a, Rng& rng) { return stretch_z(a, uniform01(rng)); }

void BlockProjector::add_identity(Eigen::Index offset, Eigen::Index size) { blocks_.push_back({offset, size, nullptr}); }

void BlockProjector::add_basis(Eigen::Index offset, std::shared_ptr<const Eigen::MatrixXd> basis) {
  if (!basis) throw DomainError("null projector basis");
  blocks_.push_back({offset, basis->rows(), std::move(basis)});
}

Eigen::VectorXd BlockProjector::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (const auto& b : blocks_) {
    if (b.offset + b.size > v.size()) throw DomainError("projector block exceeds the state");
    if (b.basis) {
      const auto& j = *b.basis;
      out.segment(b.offset, b.size) = j * (j.transpose() * v.segment(b.offset, b.size));
    } else {
      out.segment(b.offset, b.size) = v.segment(b.offset, b.size);
    }
  }
  return out;
}

Eigen::Index BlockProjector::moved_dimension() const {
  Eigen::Index d = 0;
  for (const auto& b : blocks_) d += b.basis ? b.basis->cols() : b.size;
  return d;
}

Eigen::VectorXd stretch_proposal(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_j, double z,
                                 const BlockProjector& projector) {
  if (z == 1.0) return x_i;
  return x_i + (1.0 - z) * projector.apply(x_j - x_i);
}

double stretch_acceptance(double z, Eigen::Index moved_dim, double logpi_new, double logpi_old) {
  if (!(logpi_new > kNegInf)) return 0.0;
  if (!(logpi_old > kNegInf)) return 1.0;
  const double log_ratio = static_cast<double>(moved_dim - 1) * std::log(z) + logpi_new - logpi_old;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

namespace {

struct StretchOutcome {
  bool proposed = false;
  bool accepted = false;
  double z = 1.0;
  Walker next;
};

// Proposes a stretch of `self` along a partner drawn from [first, last)
// (excluding self_index) and returns the outcome without touching the
// ensemble.
StretchOutcome stretch_one(const std::vector<Walker>& ensemble, std::size_t self_index, std::size_t first,
                           std::size_t last, const BlockProjector& projector, const Target& target, double beta,
                           double a, Rng& rng) {
  const bool self_in_range = self_index >= first && self_index < last;
  const std::size_t pool = last - first - (self_in_range ? 1 : 0);
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
  std::size_t j = first + pick(rng);
  if (self_in_range && j >= self_index) ++j;
  const double z = stretch_z(a, rng);
  const double u = uniform01(rng);

  StretchOutcome out;
  out.z = z;
  const Walker& self = ensemble[self_index];
  const Walker& partner = ensemble[j];
  if (partner.state == self.state) return out;  // degenerate direction

  out.proposed = true;
  out.next.state = stretch_proposal(self.state, partner.state, z, projector);
  out.next.parts = target.evaluate(out.next.state);
  const double p = stretch_acceptance(z, projector.moved_dimension(), out.next.parts.tempered(beta),
                                      self.parts.tempered(beta));
  out.accepted = u < p;
  return out;
}

}  // namespace

MoveStats aies_update(std::vector<Walker>& ensemble, const BlockProjector& projector, const Target& target,
                      double beta, const AiesOptions& options, const StreamKey& key,
                      std::vector<StretchTrace>* trace) {
  const std::size_t n = ensemble.size();
  if (n < 3) throw DomainError("stretch moves need at least three walkers");
  MoveStats stats;
  auto commit = [&](std::size_t i, StretchOutcome& o) {
    if (!o.proposed) return;
    ++stats.proposed;
    if (trace) trace->push_back({o.z, o.accepted});
    if (o.accepted) {
      ++stats.accepted;
      ensemble[i] = std::move(o.next);
    }
  };

  if (options.split == EnsembleSplit::Sequential) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = key.rng(i, kStretch);
      StretchOutcome o = stretch_one(ensemble, i, 0, n, projector, target, beta, options.a, rng);
      commit(i, o);
    }
    return stats;
  }

  const std::size_t half = n / 2;
  const std::size_t ranges[2][2] = {{0, half}, {half, n}};
  for (int h = 0; h < 2; ++h) {
    const std::size_t begin = ranges[h][0], end = ranges[h][1];
    const std::size_t comp_first = ranges[1 - h][0], comp_last = ranges[1 - h][1];
    std::vector<StretchOutcome> outcomes(end - begin);
    parallel_for(end - begin, options.threads, [&](std::size_t k) {
      Rng rng = key.rng(begin + k, kStretch);
      outcomes[k] = stretch_one(ensemble, begin + k, comp_first, comp_last, projector, target, beta, options.a, rng);
    });
    for (std::size_t k = 0; k < outcomes.size(); ++k) commit(begin + k, outcomes[k]);
  }
  return stats;
}

Eigen::VectorXd pcn_proposal(const Eigen::VectorXd& x, const Eigen::VectorXd& xi, double omega,
                             const Eigen::MatrixXd& basis) {
  if (!(omega > 0.0 && omega <= 1.0)) throw DomainError("pCN step size must lie in (0, 1]");
  const Eigen::VectorXd low = basis * (basis.transpose() * x);
  const Eigen::VectorXd mixed = std::sqrt(1.0 - omega * omega) * x + omega * xi;
  return low + (mixed - basis * (basis.transpose() * mixed));
}

bool pcn_update(Walker& walker, const PcnBlock& block, double omega, const Target& target, double beta, Rng& rng) {
  if (!block.prior) throw DomainError("pCN block has no prior");
  const auto n = static_cast<Eigen::Index>(block.prior->size());
  const Eigen::VectorXd xi = block.prior->sample_x(rng);
  const double u = uniform01(rng);
  Walker proposal;
  proposal.state = walker.state;
  proposal.state.segment(block.offset, n) =
      pcn_proposal(walker.state.segment(block.offset, n), xi, omega, block.prior->basis().vectors);
  proposal.parts = target.evaluate(proposal.state);
  if (!proposal.parts.finite()) return false;
  const double log_alpha = beta * (proposal.parts.loglik - walker.parts.loglik);
  if (std::log(u) < log_alpha) {
    walker = std::move(proposal);
    return true;
  }
  return false;
}

double pt_swap_probability(double beta_i, double beta_j, double loglik_i, double loglik_j) {
  if (beta_i == beta_j || loglik_i == loglik_j) return 1.0;
  const double log_ratio = (beta_i - beta_j) * (loglik_j - loglik_i);
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

bool pt_swap(Walker& at_i, Walker& at_j, double beta_i, double beta_j, Rng& rng) {
  const double p = pt_swap_probability(beta_i, beta_j, at_i.parts.loglik, at_j.parts.loglik);
  if (uniform01(rng) < p) {
    std::swap(at_i, at_j);
    return true;
  }
  return false;
}

double estimated_swap_rate(const std::vector<double>& loglik_cold, const std::vector<double>& loglik_hot,
                           double beta_cold, double beta_hot) {
  const std::size_t n = std::min(loglik_cold.size(), loglik_hot.size());
  if (n == 0) throw DomainError("no pilot samples");
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += pt_swap_probability(beta_cold, beta_hot, loglik_cold[k], loglik_hot[k]);
  return acc / static_cast<double>(n);
}

std::vector<double> fallback_schedule() { return {1.0, 0.76, 0.58, 0.44}; }

TunedSchedule tune_schedule(const PilotFn& pilot, const TuneOptions& options, Rng& rng) {
  TunedSchedule out;
  auto fallback = [&] {
    out.betas = fallback_schedule();
    out.ratio = 0.0;
    out.fallback = true;
    return out;
  };
  if (options.n_temperatures < 2 || !(options.base_beta > 0.0 && options.base_beta <= 1.0)) return fallback();

  try {
    const double base = options.base_beta;
    const std::vector<double> cold = pilot(base, rng);
    auto rate_at = [&](double ratio) {
      const std::vector<double> hot = pilot(base * ratio, rng);
      const double r = estimated_swap_rate(cold, hot, base, base * ratio);
      if (!std::isfinite(r)) throw NumericalError("non-finite pilot swap rate");
      return r;
    };

    double lo = options.min_ratio, hi = 1.0;
    double ratio = lo;
    double rate = rate_at(lo);
    if (rate < options.target_swap) {
      for (int it = 0; it < options.max_bisections; ++it) {
        ratio = std::sqrt(lo * hi);
        rate = rate_at(ratio);
        if (std::abs(rate - options.target_swap) <= options.tolerance) break;
        if (rate > options.target_swap) {
          hi = ratio;
        } else {
          lo = ratio;
        }
      }
    }
    out.ratio = ratio;
    out.pilot_swap_rate = rate;
    out.betas.resize(static_cast<std::size_t>(options.n_temperatures));
    for (int k = 0; k < options.n_temperatures; ++k) out.betas[k] = base * std::pow(ratio, k);
    return out;
  } catch (const std::exception&) {
    return fallback();
  }
}

}  // namespace lwr
