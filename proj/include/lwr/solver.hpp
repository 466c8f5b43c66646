#pragma once

// Conservative finite-volume solver for rho_t + f(rho)_x = 0 on a road
// segment with time-series density boundary conditions at both ends.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lwr/fd.hpp"

namespace lwr {

struct Grid {
  double road_length = 5.0;  ///< km
  int n_cells = 259;
  double t_final = 48.0;     ///< min
  double bc_dt = 0.025;      ///< min between boundary samples (1.5 s)
  double cfl_number = 0.9;

  double dx() const { return road_length / n_cells; }
  /// Number of boundary samples covering [0, t_final].
  std::size_t bc_length() const;
  double cell_center(int i) const { return (i + 0.5) * dx(); }
  void validate() const;
};

enum class Scheme {
  Godunov,          ///< first order
  MinmodCorrected,  ///< Godunov plus minmod-limited Lax-Wendroff correction
};

struct SolverOptions {
  Scheme scheme = Scheme::MinmodCorrected;
};

/// Density snapshots at the requested output times. Stored time-major so a
/// whole level is contiguous.
class DensityField {
 public:
  DensityField() = default;
  DensityField(int n_cells, std::vector<double> times);

  int n_cells() const { return n_cells_; }
  const std::vector<double>& times() const { return times_; }
  std::size_t n_times() const { return times_.size(); }

  double at(int cell, std::size_t level) const { return values_[level * n_cells_ + cell]; }
  double& at(int cell, std::size_t level) { return values_[level * n_cells_ + cell]; }
  std::span<const double> level(std::size_t k) const {
    return {values_.data() + k * n_cells_, static_cast<std::size_t>(n_cells_)};
  }
  std::span<double> level(std::size_t k) { return {values_.data() + k * n_cells_, static_cast<std::size_t>(n_cells_)}; }

  bool operator==(const DensityField&) const = default;

 private:
  int n_cells_ = 0;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Exact Riemann flux for a concave flux function, including the sonic
/// point when a rarefaction spans the critical density.
double godunov_flux(double rho_l, double rho_r, const FundamentalDiagram& fd);

/// CFL time step from the current cell states and the diagram's global
/// speed bound, capped at grid.bc_dt.
double cfl_dt(std::span<const double> state, const FundamentalDiagram& fd, const Grid& grid);

struct BoundaryFluxes {
  double inlet = 0.0;   ///< total flux through x = 0 during the step
  double outlet = 0.0;  ///< total flux through x = L during the step
};

/// One conservative update. Ghost cells hold bc_in / bc_out. Throws
/// NumericalError if dt violates the CFL bound or the update leaves the
/// physical range.
std::vector<double> step(std::span<const double> state, const FundamentalDiagram& fd, const Grid& grid,
                         double bc_in_value, double bc_out_value, double dt, const SolverOptions& options = {},
                         BoundaryFluxes* fluxes = nullptr);

/// Called after every accepted step with the step's start time, its length,
/// the interface fluxes of that step and the updated state.
using StepObserver =
    std::function<void(double t_start, double dt, const BoundaryFluxes& fluxes, std::span<const double> state)>;

/// March from t = 0 to the last output time. BC series are sampled every
/// grid.bc_dt and linearly interpolated; steps are clipped so integration
/// lands exactly on each output time.
DensityField solve(std::span<const double> ic, std::span<const double> bc_in, std::span<const double> bc_out,
                   const FundamentalDiagram& fd, const Grid& grid, std::span<const double> output_times,
                   const SolverOptions& options = {}, const StepObserver& observer = {});

/// Linear interpolation of a series sampled every `spacing` starting at 0.
double interpolate_series(std::span<const double> series, double spacing, double t);

/// CSV (rows = cells, columns = output times) plus `<stem>.json` metadata.
void write_density_field(const std::filesystem::path& csv_path, const DensityField& field, const Grid& grid,
                         const SolverOptions& options);

}  // namespace lwr
