#pragma once

// Observation model: PDE forward map from (FD parameters, boundary
// conditions) to detector flows, the Poisson likelihood on counts, and the
// tempered posterior that the samplers target.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lwr/fd.hpp"
#include "lwr/prior.hpp"
#include "lwr/solver.hpp"
#include "lwr/target.hpp"

namespace lwr {

/// Flow counts per (detector, observation time), summed over lanes.
struct ObservationSet {
  std::vector<double> detector_positions;  ///< km
  std::vector<double> obs_times;           ///< min
  Eigen::MatrixXd counts;                  ///< detectors x times, non-negative
  int burn_in = 0;                         ///< leading obs_times left out of the likelihood

  /// Checks counts, geometry against the grid and ordering of times.
  void validate(const Grid& grid) const;
};

/// Observation minutes shielded from the initial condition:
/// ceil(road_length / v_ff_min) with v_ff_min in km/h.
int default_burn_in(double road_length_km, double min_free_flow_kmh = 100.0);

/// Nearest cell centre; ties go to the lower index.
int detector_cell(double position_km, const Grid& grid);

enum class FlowSampling {
  Instantaneous,  ///< solver flow at the observation instant
  WindowAverage,  ///< time average over the window ending at the observation
};

struct ObservationOptions {
  FlowSampling sampling = FlowSampling::Instantaneous;
  double window = 1.0;      ///< min, for WindowAverage
  double flow_floor = 1e-3; ///< veh/min applied to predictions before the log
  SolverOptions solver{};
};

/// Predicted flows (detectors x times) for every observation time,
/// including burn-in columns. The initial condition is the constant inlet
/// density bc_in[0]. Throws DomainError / NumericalError on solver failure.
Eigen::MatrixXd observation_operator(const FundamentalDiagram& fd, std::span<const double> bc_in,
                                     std::span<const double> bc_out, const Grid& grid, const ObservationSet& geometry,
                                     const ObservationOptions& options = {});

/// sum(-qhat + q log qhat) over columns >= burn_in. -inf if any included
/// prediction is <= 0.
double poisson_loglik(const Eigen::MatrixXd& counts, const Eigen::MatrixXd& predicted, int burn_in = 0);

struct FlowDensityPoint {
  double density;  ///< veh/km
  double flow;     ///< veh/min
};

/// Poisson log-likelihood of flows predicted directly by the diagram from
/// observed densities. Densities beyond rho_j predict the floor flow.
double direct_fit_loglik(const DelCastilloParams& fd, std::span<const FlowDensityPoint> data,
                         double flow_floor = 1e-3);

/// Uniform box prior on (z, rho_j, u, omega).
struct FdPriorBox {
  std::array<double, 4> lower{100.0, 300.0, 1.0, 0.004};
  std::array<double, 4> upper{400.0, 800.0, 10.0, 10.0};

  bool contains(const std::array<double, 4>& p) const;
  /// 0 inside, -inf outside (unnormalized).
  double log_density(const std::array<double, 4>& p) const;
};

struct Theta {
  DelCastilloParams fd;
  BoundaryCondition bc_in;
  BoundaryCondition bc_out;
};

/// The full inverse problem over the flat state [fd(4), x_in(n), x_out(n)].
class InverseProblem : public Target {
 public:
  InverseProblem(Grid grid, ObservationSet observations, LogOuPrior inlet, LogOuPrior outlet, FdPriorBox box = {},
                 ObservationOptions options = {});

  Eigen::Index dim() const override { return 4 + 2 * static_cast<Eigen::Index>(bc_size()); }
  std::size_t bc_size() const { return inlet_.size(); }

  const Grid& grid() const { return grid_; }
  const ObservationSet& observations() const { return obs_; }
  const LogOuPrior& inlet_prior() const { return inlet_; }
  const LogOuPrior& outlet_prior() const { return outlet_; }
  const FdPriorBox& fd_box() const { return box_; }
  const ObservationOptions& options() const { return options_; }

  Eigen::VectorXd pack(const std::array<double, 4>& fd, const Eigen::VectorXd& x_in, const Eigen::VectorXd& x_out) const;
  Theta unpack(const Eigen::VectorXd& state) const;

  /// Untempered log-likelihood; -inf when the forward solve fails.
  double loglik(const Eigen::VectorXd& state) const;
  double logprior(const Eigen::VectorXd& state) const;
  LogDensityParts evaluate(const Eigen::VectorXd& state) const override;
  /// beta_temp * loglik + logprior.
  double log_posterior(const Eigen::VectorXd& state, double beta_temp) const;

  /// Predicted flow matrix (all observation times).
  Eigen::MatrixXd predict(const Eigen::VectorXd& state) const;

 private:
  Grid grid_;
  ObservationSet obs_;
  LogOuPrior inlet_;
  LogOuPrior outlet_;
  FdPriorBox box_;
  ObservationOptions options_;
};

}  // namespace lwr
