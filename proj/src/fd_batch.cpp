// Compiled with relaxed floating-point flags (see src/CMakeLists.txt) so the
// loops below vectorize through the vector math library.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "lwr/fd.hpp"

namespace lwr {

namespace {

// Fixed, aligned chunk length. Every element goes through the same vector
// code path; a scalar remainder loop would call libm instead of the vector
// math library and give position-dependent rounding.
constexpr std::size_t kChunk = 64;

void delcastillo_chunk(const DelCastilloParams& p, const double* __restrict rho_in, double* __restrict out_in) {
  const double* rho = static_cast<const double*>(__builtin_assume_aligned(rho_in, 64));
  double* out = static_cast<double*>(__builtin_assume_aligned(out_in, 64));
  const double gamma = 1.0 / p.omega;
  const double neg_inv_gamma = -p.omega;
  const double u_scaled = p.u / p.rho_j;
  const double inv_rho_j = 1.0 / p.rho_j;
  for (std::size_t i = 0; i < kChunk; ++i) {
    const double a = u_scaled * rho[i];
    const double b = 1.0 - rho[i] * inv_rho_j;
    const double m = std::min(a, b);
    const double big = std::max(a, b);
    // Relaxed math does not honour log(0) = -inf, so the endpoints are
    // selected explicitly.
    const double h = m > 0.0 ? std::exp(gamma * std::log(m / big)) : 0.0;
    out[i] = p.z * m * std::exp(neg_inv_gamma * std::log(1.0 + h));
  }
}

void triangular_batch(const TriangularParams& p, const double* rho, double* out, std::size_t n) {
  const double free_slope = p.q_c / p.rho_c;
  const double cong_slope = p.q_c / (p.rho_j - p.rho_c);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::min(free_slope * rho[i], cong_slope * (p.rho_j - rho[i]));
  }
}

}  // namespace

void flow_batch(const FundamentalDiagram& fd, std::span<const double> rho, std::span<double> out) {
  const std::size_t n = std::min(rho.size(), out.size());
  if (const auto* dc = std::get_if<DelCastilloParams>(&fd)) {
    alignas(64) double in_buf[kChunk];
    alignas(64) double out_buf[kChunk];
    for (std::size_t start = 0; start < n; start += kChunk) {
      const std::size_t len = std::min(kChunk, n - start);
      std::copy_n(rho.data() + start, len, in_buf);
      std::fill(in_buf + len, in_buf + kChunk, 0.5 * dc->rho_j);
      delcastillo_chunk(*dc, in_buf, out_buf);
      std::copy_n(out_buf, len, out.data() + start);
    }
  } else {
    triangular_batch(std::get<TriangularParams>(fd), rho.data(), out.data(), n);
  }
}

}  // namespace lwr
