#include "lwr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lwr/csv.hpp"
#include "lwr/errors.hpp"

namespace lwr {

std::size_t Grid::bc_length() const { return static_cast<std::size_t>(std::llround(t_final / bc_dt)) + 1; }

void Grid::validate() const {
  if (n_cells < 3) throw ConfigError("grid needs at least 3 cells");
  if (!(road_length > 0.0)) throw ConfigError("road_length must be positive");
  if (!(t_final > 0.0)) throw ConfigError("t_final must be positive");
  if (!(bc_dt > 0.0)) throw ConfigError("bc_dt must be positive");
  if (!(cfl_number > 0.0 && cfl_number <= 1.0)) throw ConfigError("cfl_number must lie in (0, 1]");
}

DensityField::DensityField(int n_cells, std::vector<double> times)
    : n_cells_(n_cells), times_(std::move(times)), values_(times_.size() * static_cast<std::size_t>(n_cells), 0.0) {}

namespace {

// Godunov flux from precomputed flux values; f_c is the flux at the sonic
// (critical) density rho_c.
inline double godunov_from_values(double rho_l, double rho_r, double f_l, double f_r, double rho_c, double f_c) {
  if (rho_l <= rho_r) return std::min(f_l, f_r);
  if (rho_r <= rho_c && rho_c <= rho_l) return f_c;
  return std::max(f_l, f_r);
}

inline double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

// Reused buffers for repeated steps: ghost-padded states, their fluxes,
// interface fluxes and limiter inputs.
class Stepper {
 public:
  Stepper(const FundamentalDiagram& fd, const Grid& grid, const SolverOptions& options)
      : fd_(fd),
        grid_(grid),
        options_(options),
        n_(grid.n_cells),
        rho_j_(jam_density(fd)),
        rho_c_(critical_density_of(fd)),
        f_c_(flow(rho_c_, fd)),
        speed_bound_(max_wave_speed(fd)),
        q_(n_ + 2),
        f_(n_ + 2),
        flux_(n_ + 1),
        corr_(n_ + 3, 0.0),
        speed_(n_ + 3, 0.0) {}

  // Advances `state` (n cells) in place.
  BoundaryFluxes advance(std::span<double> state, double bc_in, double bc_out, double dt) {
    const double dx = grid_.dx();
    if (!(dt > 0.0) || dt * speed_bound_ > dx * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "time step " << dt << " violates the CFL bound dx/lambda_max = " << dx / speed_bound_;
      throw NumericalError(msg.str());
    }
    q_[0] = bc_in;
    std::copy(state.begin(), state.end(), q_.begin() + 1);
    q_[n_ + 1] = bc_out;
    flow_batch(fd_, q_, f_);

    // corr_ holds the unlimited Lax-Wendroff correction per interface,
    // padded with a zero on each side so the correction upwind of a ghost
    // cell reads as zero and switches the limiter off.
    const bool corrected = options_.scheme == Scheme::MinmodCorrected;
    const double ratio = dt / dx;
    for (int i = 0; i <= n_; ++i) {
      flux_[i] = godunov_from_values(q_[i], q_[i + 1], f_[i], f_[i + 1], rho_c_, f_c_);
      if (corrected) {
        const double w = q_[i + 1] - q_[i];
        const double s = w != 0.0 ? (f_[i + 1] - f_[i]) / w : 0.0;
        const double abs_s = std::abs(s);
        speed_[i + 1] = s;
        corr_[i + 1] = 0.5 * abs_s * (1.0 - ratio * abs_s) * w;
      }
    }
    if (corrected) {
      // Limiting the ratio of corrections rather than of jumps keeps the
      // scheme TVD when the local speed varies between interfaces.
      for (int i = 0; i <= n_; ++i) {
        const double c = corr_[i + 1];
        const double c_up = speed_[i + 1] > 0.0 ? corr_[i] : corr_[i + 2];
        flux_[i] += minmod(c, c_up);
      }
    }

    const double slack = 1e-9 * rho_j_;
    for (int i = 0; i < n_; ++i) {
      double v = q_[i + 1] - ratio * (flux_[i + 1] - flux_[i]);
      if (!(v >= -slack && v <= rho_j_ + slack)) {
        std::ostringstream msg;
        msg << "density " << v << " left [0, rho_j] in cell " << i;
        throw NumericalError(msg.str());
      }
      state[i] = std::clamp(v, 0.0, rho_j_);
    }
    return {flux_[0] * dt, flux_[n_] * dt};
  }

 private:
  const FundamentalDiagram& fd_;
  const Grid& grid_;
  const SolverOptions& options_;
  int n_;
  double rho_j_;
  double rho_c_;
  double f_c_;
  double speed_bound_;
  std::vector<double> q_, f_, flux_, corr_, speed_;
};

void require_range(std::span<const double> values, double rho_j, const char* what) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= rho_j)) {
      std::ostringstream msg;
      msg << what << " value " << v << " outside [0, " << rho_j << "]";
      throw DomainError(msg.str());
    }
  }
}

}  // namespace

double godunov_flux(double rho_l, double rho_r, const FundamentalDiagram& fd) {
  const double f_l = flow(rho_l, fd);
  const double f_r = flow(rho_r, fd);
  const double rho_c = critical_density_of(fd);
  return godunov_from_values(rho_l, rho_r, f_l, f_r, rho_c, flow(rho_c, fd));
}

double cfl_dt(std::span<const double> state, const FundamentalDiagram& fd, const Grid& grid) {
  double lambda = max_wave_speed(fd);
  for (double rho : state) lambda = std::max(lambda, std::abs(wave_speed(rho, fd)));
  if (lambda == 0.0) return grid.bc_dt;
  return std::min(grid.cfl_number * grid.dx() / lambda, grid.bc_dt);
}

std::vector<double> step(std::span<const double> state, const FundamentalDiagram& fd, const Grid& grid,
                         double bc_in_value, double bc_out_value, double dt, const SolverOptions& options,
                         BoundaryFluxes* fluxes) {
  grid.validate();
  if (state.size() != static_cast<std::size_t>(grid.n_cells)) throw DomainError("state size does not match grid");
  const double rho_j = jam_density(fd);
  require_range(state, rho_j, "state");
  const double bcs[] = {bc_in_value, bc_out_value};
  require_range(bcs, rho_j, "boundary");
  std::vector<double> next(state.begin(), state.end());
  Stepper stepper(fd, grid, options);
  const BoundaryFluxes f = stepper.advance(next, bc_in_value, bc_out_value, dt);
  if (fluxes) *fluxes = f;
  return next;
}

double interpolate_series(std::span<const double> series, double spacing, double t) {
  const double pos = t / spacing;
  const auto last = static_cast<double>(series.size() - 1);
  if (pos <= 0.0) return series.front();
  if (pos >= last) return series.back();
  const auto i0 = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i0);
  return series[i0] + frac * (series[i0 + 1] - series[i0]);
}

DensityField solve(std::span<const double> ic, std::span<const double> bc_in, std::span<const double> bc_out,
                   const FundamentalDiagram& fd, const Grid& grid, std::span<const double> output_times,
                   const SolverOptions& options, const StepObserver& observer) {
  grid.validate();
  const double rho_j = jam_density(fd);
  if (ic.size() != static_cast<std::size_t>(grid.n_cells)) {
    throw ConfigError("initial condition has " + std::to_string(ic.size()) + " values, grid has " +
                      std::to_string(grid.n_cells) + " cells");
  }
  const std::size_t need = grid.bc_length();
  if (bc_in.size() < need || bc_out.size() < need) {
    throw ConfigError("boundary series too short: need " + std::to_string(need) + " samples at spacing bc_dt");
  }
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    if (output_times[k] < 0.0 || output_times[k] > grid.t_final * (1.0 + 1e-12) ||
        (k > 0 && !(output_times[k] > output_times[k - 1]))) {
      throw ConfigError("output times must be increasing within [0, t_final]");
    }
  }
  require_range(ic, rho_j, "initial condition");
  require_range(bc_in.first(need), rho_j, "inlet boundary");
  require_range(bc_out.first(need), rho_j, "outlet boundary");

  DensityField field(grid.n_cells, std::vector<double>(output_times.begin(), output_times.end()));
  std::vector<double> state(ic.begin(), ic.end());
  Stepper stepper(fd, grid, options);
  // For the concave diagrams here the global speed bound dominates every
  // cell's characteristic speed, so the CFL step is constant in time.
  const double dt_max = std::min(grid.cfl_number * grid.dx() / max_wave_speed(fd), grid.bc_dt);

  double t = 0.0;
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    const double target = output_times[k];
    while (t < target) {
      const double remaining = target - t;
      const bool lands = remaining <= dt_max * (1.0 + 1e-12);
      const double dt = lands ? remaining : dt_max;
      const double t_mid = t + 0.5 * dt;
      const double in = interpolate_series(bc_in, grid.bc_dt, t_mid);
      const double out = interpolate_series(bc_out, grid.bc_dt, t_mid);
      const BoundaryFluxes fluxes = stepper.advance(state, in, out, dt);
      if (observer) observer(t, dt, fluxes, state);
      t = lands ? target : t + dt;
    }
    std::copy(state.begin(), state.end(), field.level(k).begin());
  }
  return field;
}

void write_density_field(const std::filesystem::path& csv_path, const DensityField& field, const Grid& grid,
                         const SolverOptions& options) {
  std::vector<std::string> header{"x_km"};
  for (double t : field.times()) header.push_back("t=" + csv::format(t));
  std::vector<std::vector<double>> rows;
  rows.reserve(field.n_cells());
  for (int i = 0; i < field.n_cells(); ++i) {
    std::vector<double> row{grid.cell_center(i)};
    for (std::size_t k = 0; k < field.n_times(); ++k) row.push_back(field.at(i, k));
    rows.push_back(std::move(row));
  }
  csv::write(csv_path, header, rows);

  nlohmann::json meta = {
      {"road_length_km", grid.road_length},
      {"n_cells", grid.n_cells},
      {"dx_km", grid.dx()},
      {"t_final_min", grid.t_final},
      {"bc_dt_min", grid.bc_dt},
      {"cfl_number", grid.cfl_number},
      {"scheme", options.scheme == Scheme::Godunov ? "godunov" : "minmod"},
      {"times_min", field.times()},
  };
  std::filesystem::path json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write '" + json_path.string() + "'");
  out << meta.dump(2) << '\n';
}

}  // namespace lwr
