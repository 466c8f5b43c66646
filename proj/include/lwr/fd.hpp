#pragma once

// Fundamental diagrams: flow as a function of density for the LWR model.
//
// Units throughout: density in veh/km, flow in veh/min, wave speed in km/min.

#include <array>
#include <span>
#include <utility>
#include <variant>

namespace lwr {

/// Piecewise-linear (bi-linear) diagram with capacity q_c at rho_c.
struct TriangularParams {
  double q_c = 1.0;
  double rho_c = 0.15;
  double rho_j = 1.0;

  void validate() const;
};

/// Negative-power diagram. The shape parameter is stored inverted
/// (omega = 1/gamma) because that is the sampled coordinate; gamma -> inf
/// recovers the triangular limit.
struct DelCastilloParams {
  double z = 1.0;
  double rho_j = 1.0;
  double u = 3.1;
  double omega = 0.2;

  double gamma() const { return 1.0 / omega; }
  void validate() const;

  /// Sampler coordinate order: (z, rho_j, u, omega).
  std::array<double, 4> to_array() const { return {z, rho_j, u, omega}; }
  static DelCastilloParams from_array(const std::array<double, 4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
};

using FundamentalDiagram = std::variant<TriangularParams, DelCastilloParams>;

double triangular_flow(double rho, const TriangularParams& p);

/// Continuously extended to q(0) = q(rho_j) = 0.
double delcastillo_flow(double rho, const DelCastilloParams& p);

/// Dimensionless critical density 1 / (1 + u^(gamma/(gamma+1))). Multiply by
/// rho_j for physical units. omega == 0 is accepted as the triangular limit.
double critical_density(double u, double omega);

double flow(double rho, const FundamentalDiagram& fd);

/// dq/drho. For the triangular diagram the value at exactly rho_c is the
/// congested slope.
double wave_speed(double rho, const FundamentalDiagram& fd);

double jam_density(const FundamentalDiagram& fd);
/// Density of maximum flow, in veh/km.
double critical_density_of(const FundamentalDiagram& fd);
double capacity(const FundamentalDiagram& fd);

/// Global bound max(|q'(0+)|, |q'(rho_j-)|) on characteristic speeds. For the
/// concave diagrams here this bounds |wave_speed| everywhere on [0, rho_j].
double max_wave_speed(const FundamentalDiagram& fd);

struct DensityPair {
  double free_flow;
  double congested;
};

/// The two densities mapping to flow q, one on each side of the critical
/// density. Throws DomainError when q exceeds capacity or is negative.
DensityPair density_pair_for_flow(double q, const FundamentalDiagram& fd);

/// Evaluates the diagram over a batch of densities already known to lie in
/// [0, rho_j]. No domain checks; used by the solver's inner loop.
void flow_batch(const FundamentalDiagram& fd, std::span<const double> rho, std::span<double> out);

}  // namespace lwr
