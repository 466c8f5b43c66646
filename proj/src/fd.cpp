#include "lwr/fd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lwr/errors.hpp"

namespace lwr {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void require_density(double rho, double rho_j) {
  if (!(rho >= 0.0 && rho <= rho_j)) {
    std::ostringstream msg;
    msg << "density " << rho << " outside [0, " << rho_j << "]";
    throw DomainError(msg.str());
  }
}

// Stable evaluation of the negative-power diagram. With A = u rho/rho_j,
// B = 1 - rho/rho_j, m = min(A,B), M = max(A,B):
//   q = Z m (1 + (m/M)^gamma)^(-1/gamma)
// which avoids overflow of A^-gamma for large gamma or small A.
struct PowerTerms {
  double a, b, m, r, h, g;
};

PowerTerms power_terms(double rho, const DelCastilloParams& p) {
  PowerTerms t{};
  const double gamma = p.gamma();
  t.a = p.u * rho / p.rho_j;
  t.b = 1.0 - rho / p.rho_j;
  t.m = std::min(t.a, t.b);
  const double big = std::max(t.a, t.b);
  t.r = t.m / big;
  t.h = std::pow(t.r, gamma);
  t.g = p.z * std::pow(1.0 + t.h, -1.0 / gamma);
  return t;
}

}  // namespace

void TriangularParams::validate() const {
  if (!(q_c > 0.0) || !(rho_c > 0.0) || !(rho_c < rho_j)) {
    throw DomainError("triangular diagram requires q_c > 0 and 0 < rho_c < rho_j");
  }
}

void DelCastilloParams::validate() const {
  if (!(z > 0.0) || !(rho_j > 0.0) || !(u > 0.0) || !(omega > 0.0) || !std::isfinite(z + rho_j + u + omega)) {
    throw DomainError("del Castillo parameters must be finite and strictly positive");
  }
}

double triangular_flow(double rho, const TriangularParams& p) {
  require_density(rho, p.rho_j);
  if (rho < p.rho_c) return p.q_c / p.rho_c * rho;
  return p.q_c * (p.rho_j - rho) / (p.rho_j - p.rho_c);
}

double delcastillo_flow(double rho, const DelCastilloParams& p) {
  require_density(rho, p.rho_j);
  if (rho == 0.0 || rho == p.rho_j) return 0.0;
  const PowerTerms t = power_terms(rho, p);
  return t.g * t.m;
}

double critical_density(double u, double omega) {
  if (!(u > 0.0) || !(omega >= 0.0)) throw DomainError("critical_density requires u > 0, omega >= 0");
  // gamma/(gamma+1) == 1/(1+omega)
  return 1.0 / (1.0 + std::pow(u, 1.0 / (1.0 + omega)));
}

double flow(double rho, const FundamentalDiagram& fd) {
  return std::visit(Overloaded{[rho](const TriangularParams& p) { return triangular_flow(rho, p); },
                               [rho](const DelCastilloParams& p) { return delcastillo_flow(rho, p); }},
                    fd);
}

double wave_speed(double rho, const FundamentalDiagram& fd) {
  return std::visit(
      Overloaded{[rho](const TriangularParams& p) {
                   require_density(rho, p.rho_j);
                   return rho < p.rho_c ? p.q_c / p.rho_c : -p.q_c / (p.rho_j - p.rho_c);
                 },
                 [rho](const DelCastilloParams& p) {
                   require_density(rho, p.rho_j);
                   if (rho == 0.0) return p.z * p.u / p.rho_j;
                   if (rho == p.rho_j) return -p.z / p.rho_j;
                   const PowerTerms t = power_terms(rho, p);
                   const double small_w = 1.0 / (1.0 + t.h);
                   const double large_w = t.h / (1.0 + t.h);
                   if (t.a <= t.b) return t.g / p.rho_j * (small_w * p.u - large_w * t.r);
                   return t.g / p.rho_j * (large_w * p.u * t.r - small_w);
                 }},
      fd);
}

double jam_density(const FundamentalDiagram& fd) {
  return std::visit([](const auto& p) { return p.rho_j; }, fd);
}

double critical_density_of(const FundamentalDiagram& fd) {
  return std::visit(Overloaded{[](const TriangularParams& p) { return p.rho_c; },
                               [](const DelCastilloParams& p) { return p.rho_j * critical_density(p.u, p.omega); }},
                    fd);
}

double capacity(const FundamentalDiagram& fd) {
  return std::visit(Overloaded{[](const TriangularParams& p) { return p.q_c; },
                               [](const DelCastilloParams& p) {
                                 return delcastillo_flow(p.rho_j * critical_density(p.u, p.omega), p);
                               }},
                    fd);
}

double max_wave_speed(const FundamentalDiagram& fd) {
  return std::visit(Overloaded{[](const TriangularParams& p) {
                                 return std::max(p.q_c / p.rho_c, p.q_c / (p.rho_j - p.rho_c));
                               },
                               [](const DelCastilloParams& p) { return std::max(p.z * p.u, p.z) / p.rho_j; }},
                    fd);
}

namespace {

// Bisection on a monotone branch until the bracket stops shrinking in double
// precision. `increasing` gives the branch orientation.
double bisect_branch(double q, double lo, double hi, bool increasing, const FundamentalDiagram& fd) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = flow(mid, fd);
    if ((fm < q) == increasing) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double f_lo = flow(lo, fd);
  const double f_hi = flow(hi, fd);
  return std::abs(f_lo - q) <= std::abs(f_hi - q) ? lo : hi;
}

}  // namespace

DensityPair density_pair_for_flow(double q, const FundamentalDiagram& fd) {
  const double rho_c = critical_density_of(fd);
  const double rho_j = jam_density(fd);
  const double cap = flow(rho_c, fd);
  if (!(q >= 0.0)) throw DomainError("density_pair_for_flow: flow must be non-negative");
  if (q > cap) {
    std::ostringstream msg;
    msg << "flow " << q << " exceeds capacity " << cap << "; no density maps to it";
    throw DomainError(msg.str());
  }
  if (q == cap) return {rho_c, rho_c};
  if (q == 0.0) return {0.0, rho_j};
  return {bisect_branch(q, 0.0, rho_c, true, fd), bisect_branch(q, rho_c, rho_j, false, fd)};
}

}  // namespace lwr
