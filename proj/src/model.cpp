#include "lwr/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "lwr/errors.hpp"

namespace lwr {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void ObservationSet::validate(const Grid& grid) const {
  const auto n_det = static_cast<Eigen::Index>(detector_positions.size());
  const auto n_t = static_cast<Eigen::Index>(obs_times.size());
  if (n_det == 0 || n_t == 0) throw DataError("observation set is empty");
  if (counts.rows() != n_det || counts.cols() != n_t) {
    std::ostringstream msg;
    msg << "count matrix is " << counts.rows() << "x" << counts.cols() << ", expected " << n_det << "x" << n_t;
    throw DataError(msg.str());
  }
  for (double x : detector_positions) {
    if (!(x >= 0.0 && x <= grid.road_length)) {
      std::ostringstream msg;
      msg << "detector at " << x << " km lies outside the road [0, " << grid.road_length << "]";
      throw DataError(msg.str());
    }
  }
  for (Eigen::Index k = 0; k < n_t; ++k) {
    if (obs_times[k] < 0.0 || obs_times[k] > grid.t_final * (1.0 + 1e-12)) {
      throw DataError("observation time " + std::to_string(obs_times[k]) + " outside [0, t_final]");
    }
    if (k > 0 && !(obs_times[k] > obs_times[k - 1])) throw DataError("observation times must increase");
  }
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    const double c = counts.data()[i];
    if (!(c >= 0.0) || !std::isfinite(c)) throw DataError("counts must be finite and non-negative");
  }
  if (burn_in < 0 || burn_in > n_t) throw DataError("burn_in outside [0, number of observation times]");
}

int default_burn_in(double road_length_km, double min_free_flow_kmh) {
  return static_cast<int>(std::ceil(road_length_km / (min_free_flow_kmh / 60.0) - 1e-12));
}

int detector_cell(double position_km, const Grid& grid) {
  const double dx = grid.dx();
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.n_cells; ++i) {
    const double d = std::abs(grid.cell_center(i) - position_km);
    if (d < best_dist - 1e-12 * dx) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

Eigen::MatrixXd observation_operator(const FundamentalDiagram& fd, std::span<const double> bc_in,
                                     std::span<const double> bc_out, const Grid& grid, const ObservationSet& geometry,
                                     const ObservationOptions& options) {
  if (bc_in.empty()) throw ConfigError("empty inlet boundary series");
  const std::vector<double> ic(static_cast<std::size_t>(grid.n_cells), bc_in.front());
  const auto n_det = geometry.detector_positions.size();
  const auto n_t = geometry.obs_times.size();
  std::vector<int> cells(n_det);
  for (std::size_t d = 0; d < n_det; ++d) cells[d] = detector_cell(geometry.detector_positions[d], grid);

  Eigen::MatrixXd predicted(static_cast<Eigen::Index>(n_det), static_cast<Eigen::Index>(n_t));

  if (options.sampling == FlowSampling::Instantaneous) {
    const DensityField field = solve(ic, bc_in, bc_out, fd, grid, geometry.obs_times, options.solver);
    for (std::size_t k = 0; k < n_t; ++k) {
      for (std::size_t d = 0; d < n_det; ++d) {
        predicted(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = flow(field.at(cells[d], k), fd);
      }
    }
    return predicted;
  }

  // Window average: integrate f(rho) at detector cells over each window.
  if (!(options.window > 0.0)) throw ConfigError("averaging window must be positive");
  std::vector<double> stops;
  for (double t : geometry.obs_times) {
    const double start = t - options.window;
    if (start > 0.0 && (stops.empty() || start > stops.back())) stops.push_back(start);
    if (stops.empty() || t > stops.back()) stops.push_back(t);
  }
  Eigen::MatrixXd integral = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_det), static_cast<Eigen::Index>(n_t));
  std::vector<double> f_cells(n_det);
  auto observer = [&](double t0, double dt, const BoundaryFluxes&, std::span<const double> state) {
    const double t1 = t0 + dt;
    for (std::size_t d = 0; d < n_det; ++d) f_cells[d] = flow(state[cells[d]], fd);
    for (std::size_t k = 0; k < n_t; ++k) {
      const double hi = geometry.obs_times[k];
      const double lo = hi - options.window;
      const double overlap = std::min(t1, hi) - std::max(t0, lo);
      if (overlap <= 0.0) continue;
      for (std::size_t d = 0; d < n_det; ++d) {
        integral(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) += overlap * f_cells[d];
      }
    }
  };
  const DensityField field = solve(ic, bc_in, bc_out, fd, grid, stops, options.solver, observer);
  for (std::size_t k = 0; k < n_t; ++k) {
    const double covered = std::min(options.window, geometry.obs_times[k]);
    for (std::size_t d = 0; d < n_det; ++d) {
      const auto r = static_cast<Eigen::Index>(d);
      const auto c = static_cast<Eigen::Index>(k);
      predicted(r, c) = covered > 0.0 ? integral(r, c) / covered : flow(ic.front(), fd);
    }
  }
  return predicted;
}

double poisson_loglik(const Eigen::MatrixXd& counts, const Eigen::MatrixXd& predicted, int burn_in) {
  if (counts.rows() != predicted.rows() || counts.cols() != predicted.cols()) {
    throw DomainError("poisson_loglik: count and prediction shapes differ");
  }
  double total = 0.0;
  for (Eigen::Index k = burn_in; k < counts.cols(); ++k) {
    for (Eigen::Index d = 0; d < counts.rows(); ++d) {
      const double qhat = predicted(d, k);
      if (!(qhat > 0.0)) return kNegInf;
      total += -qhat + counts(d, k) * std::log(qhat);
    }
  }
  return total;
}

double direct_fit_loglik(const DelCastilloParams& fd, std::span<const FlowDensityPoint> data, double flow_floor) {
  double total = 0.0;
  for (const auto& pt : data) {
    if (!(pt.density >= 0.0)) throw DomainError("observed densities must be non-negative");
    const double qhat = pt.density >= fd.rho_j ? flow_floor : std::max(delcastillo_flow(pt.density, fd), flow_floor);
    total += -qhat + pt.flow * std::log(qhat);
  }
  return total;
}

bool FdPriorBox::contains(const std::array<double, 4>& p) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(p[i] >= lower[i] && p[i] <= upper[i])) return false;
  }
  return true;
}

double FdPriorBox::log_density(const std::array<double, 4>& p) const { return contains(p) ? 0.0 : kNegInf; }

InverseProblem::InverseProblem(Grid grid, ObservationSet observations, LogOuPrior inlet, LogOuPrior outlet,
                               FdPriorBox box, ObservationOptions options)
    : grid_(grid),
      obs_(std::move(observations)),
      inlet_(std::move(inlet)),
      outlet_(std::move(outlet)),
      box_(box),
      options_(options) {
  grid_.validate();
  obs_.validate(grid_);
  if (inlet_.size() != grid_.bc_length() || outlet_.size() != grid_.bc_length()) {
    throw ConfigError("boundary priors must live on the grid's boundary time axis (t_final / bc_dt + 1 points)");
  }
}

Eigen::VectorXd InverseProblem::pack(const std::array<double, 4>& fd, const Eigen::VectorXd& x_in,
                                     const Eigen::VectorXd& x_out) const {
  const auto n = static_cast<Eigen::Index>(bc_size());
  if (x_in.size() != n || x_out.size() != n) throw DomainError("BC coordinate length does not match the grid");
  Eigen::VectorXd s(dim());
  for (int i = 0; i < 4; ++i) s(i) = fd[i];
  s.segment(4, n) = x_in;
  s.segment(4 + n, n) = x_out;
  return s;
}

Theta InverseProblem::unpack(const Eigen::VectorXd& state) const {
  const auto n = static_cast<Eigen::Index>(bc_size());
  Theta th;
  th.fd = DelCastilloParams::from_array({state(0), state(1), state(2), state(3)});
  th.bc_in = inlet_.make_bc(state.segment(4, n));
  th.bc_out = outlet_.make_bc(state.segment(4 + n, n));
  return th;
}

Eigen::MatrixXd InverseProblem::predict(const Eigen::VectorXd& state) const {
  const Theta th = unpack(state);
  th.fd.validate();
  return observation_operator(th.fd, th.bc_in.density, th.bc_out.density, grid_, obs_, options_);
}

double InverseProblem::loglik(const Eigen::VectorXd& state) const {
  Eigen::MatrixXd predicted;
  try {
    predicted = predict(state);
  } catch (const DomainError&) {
    return kNegInf;
  } catch (const NumericalError&) {
    return kNegInf;
  }
  predicted = predicted.cwiseMax(options_.flow_floor);
  return poisson_loglik(obs_.counts, predicted, obs_.burn_in);
}

double InverseProblem::logprior(const Eigen::VectorXd& state) const {
  const auto n = static_cast<Eigen::Index>(bc_size());
  const double box = box_.log_density({state(0), state(1), state(2), state(3)});
  if (!std::isfinite(box)) return kNegInf;
  return box + inlet_.log_density(state.segment(4, n)) + outlet_.log_density(state.segment(4 + n, n));
}

LogDensityParts InverseProblem::evaluate(const Eigen::VectorXd& state) const {
  LogDensityParts parts;
  parts.logprior = logprior(state);
  parts.loglik = std::isfinite(parts.logprior) ? loglik(state) : kNegInf;
  return parts;
}

double InverseProblem::log_posterior(const Eigen::VectorXd& state, double beta_temp) const {
  if (!(beta_temp > 0.0 && beta_temp <= 1.0)) throw DomainError("inverse temperature must lie in (0, 1]");
  return evaluate(state).tempered(beta_temp);
}

}  // namespace lwr
