#include <doctest.h>

#include <cmath>
#include <vector>

#include "lwr/errors.hpp"
#include "lwr/fd.hpp"

using namespace lwr;

namespace {

const TriangularParams kTri{1.0, 0.15, 1.0};

DelCastilloParams dc(double z, double rho_j, double u, double gamma) { return {z, rho_j, u, 1.0 / gamma}; }

}  // namespace

TEST_SUITE("fd") {
  TEST_CASE("triangular flow values") {
    CHECK(triangular_flow(0.0, kTri) == 0.0);
    CHECK(triangular_flow(0.15, kTri) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(triangular_flow(0.575, kTri) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(triangular_flow(1.0, kTri) == 0.0);
    CHECK_THROWS_AS(triangular_flow(-0.1, kTri), DomainError);
    CHECK_THROWS_AS(triangular_flow(1.1, kTri), DomainError);
  }

  TEST_CASE("del Castillo flow against high-precision evaluation") {
    // 50-digit evaluation of the closed form at rho = 0.3.
    CHECK(delcastillo_flow(0.3, dc(1, 1, 3.1, 5)) == doctest::Approx(0.670351421848542853).epsilon(1e-13));
    CHECK(delcastillo_flow(0.0, dc(1, 1, 3.1, 5)) == 0.0);
    CHECK(delcastillo_flow(1.0, dc(1, 1, 3.1, 5)) == 0.0);
    CHECK(delcastillo_flow(0.0, dc(250, 500, 3.1, 5)) == 0.0);
    CHECK(delcastillo_flow(500.0, dc(250, 500, 3.1, 5)) == 0.0);
    CHECK_THROWS_AS(delcastillo_flow(1.2, dc(1, 1, 3.1, 5)), DomainError);
    CHECK_THROWS_AS(delcastillo_flow(-1e-3, dc(1, 1, 3.1, 5)), DomainError);
    CHECK_THROWS_AS(DelCastilloParams({1, 1, 3.1, 0.0}).validate(), DomainError);
  }

  TEST_CASE("batch kernel agrees with scalar evaluation") {
    for (const FundamentalDiagram fd : {FundamentalDiagram{dc(250, 500, 3.1, 5)}, FundamentalDiagram{dc(1, 1, 3.1, 100)},
                                        FundamentalDiagram{dc(400, 300, 10, 0.1)}, FundamentalDiagram{kTri}}) {
      const double rj = jam_density(fd);
      std::vector<double> rho, out(1001);
      for (int i = 0; i <= 1000; ++i) rho.push_back(rj * i / 1000.0);
      flow_batch(fd, rho, out);
      for (int i = 0; i <= 1000; ++i) {
        const double ref = flow(rho[i], fd);
        CHECK(std::abs(out[i] - ref) <= 1e-12 * (1.0 + std::abs(ref)) * capacity(fd));
      }
    }
  }

  TEST_CASE("batch kernel result does not depend on position") {
    const FundamentalDiagram fd = dc(250, 500, 3.1, 0.2);
    for (std::size_t n : {1u, 7u, 42u, 64u, 65u, 261u}) {
      for (double rho : {0.0, 37.3, 120.0, 140.1643, 499.9, 500.0}) {
        const std::vector<double> in(n, rho);
        std::vector<double> out(n);
        flow_batch(fd, in, out);
        for (double v : out) CHECK(v == out.front());
      }
    }
  }

  TEST_CASE("triangular limit at large gamma") {
    const auto p = dc(1, 1, 3.1, 100);
    double worst = 0.0;
    for (int i = 0; i <= 10000; ++i) {
      const double rho = i / 10000.0;
      worst = std::max(worst, std::abs(delcastillo_flow(rho, p) - std::min(3.1 * rho, 1.0 - rho)));
    }
    CHECK(worst < 0.02);
  }

  TEST_CASE("critical density") {
    CHECK(critical_density(1.0, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(critical_density(1.0, 3.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(critical_density(3.1, 0.2) == doctest::Approx(0.280328022917084).epsilon(1e-13));
    CHECK(critical_density(3.1, 1e-9) == doctest::Approx(1.0 / 4.1).epsilon(1e-7));
    CHECK(critical_density_of(FundamentalDiagram{dc(250, 500, 3.1, 5)}) ==
          doctest::Approx(140.164011458542).epsilon(1e-12));
  }

  TEST_CASE("wave speeds") {
    CHECK(wave_speed(0.05, kTri) == doctest::Approx(1.0 / 0.15));
    CHECK(wave_speed(0.5, kTri) == doctest::Approx(-1.0 / 0.85));
    CHECK(wave_speed(0.15, kTri) == doctest::Approx(-1.0 / 0.85));
    CHECK_THROWS_AS(wave_speed(1.5, kTri), DomainError);

    const FundamentalDiagram fd = dc(1, 1, 3.1, 5);
    const double h = 1e-6;
    for (int i = 1; i < 1000; ++i) {
      const double rho = i / 1000.0;
      const double fdiff = (flow(rho + h, fd) - flow(rho - h, fd)) / (2 * h);
      const double ws = wave_speed(rho, fd);
      CHECK(std::abs(ws - fdiff) <= 1e-5 * std::max(std::abs(ws), 1e-2));
    }
    CHECK(max_wave_speed(fd) == doctest::Approx(3.1));
  }

  TEST_CASE("unimodality and peak location") {
    for (const auto& p : {dc(1, 1, 3.1, 5), dc(250, 500, 3.1, 5), dc(100, 800, 1.5, 0.7), dc(400, 300, 9, 40)}) {
      const FundamentalDiagram fd = p;
      const int n = 10000;
      int changes = 0;
      double prev = wave_speed(p.rho_j / n, fd);
      int argmax = 0;
      double best = -1.0;
      for (int i = 1; i < n; ++i) {
        const double rho = p.rho_j * i / n;
        const double s = wave_speed(rho, fd);
        if ((s > 0) != (prev > 0)) ++changes;
        prev = s;
        const double q = flow(rho, fd);
        CHECK(q >= 0.0);
        if (q > best) {
          best = q;
          argmax = i;
        }
      }
      CHECK(changes == 1);
      CHECK(std::abs(p.rho_j * argmax / n - p.rho_j * critical_density(p.u, p.omega)) <= p.rho_j / n);
    }
  }

  TEST_CASE("density pairs") {
    const auto tri = density_pair_for_flow(0.5, kTri);
    CHECK(tri.free_flow == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(tri.congested == doctest::Approx(0.575).epsilon(1e-12));

    const FundamentalDiagram fd = dc(250, 500, 3.1, 5);
    const auto at_cap = density_pair_for_flow(capacity(fd), fd);
    CHECK(at_cap.free_flow == doctest::Approx(critical_density_of(fd)));
    CHECK(at_cap.congested == doctest::Approx(critical_density_of(fd)));
    CHECK_THROWS_AS(density_pair_for_flow(capacity(fd) * 1.001, fd), DomainError);
    CHECK_THROWS_AS(density_pair_for_flow(-1.0, fd), DomainError);

    for (double frac : {0.01, 0.2, 0.5, 0.9, 0.999}) {
      const double q = frac * capacity(fd);
      const auto pr = density_pair_for_flow(q, fd);
      CHECK(pr.free_flow < critical_density_of(fd));
      CHECK(pr.congested > critical_density_of(fd));
      CHECK(std::abs(flow(pr.free_flow, fd) - q) <= 1e-10 * q);
      CHECK(std::abs(flow(pr.congested, fd) - q) <= 1e-10 * q);
    }
  }

  TEST_CASE("twin diagram reference quantities") {
    const FundamentalDiagram fd = DelCastilloParams{250, 500, 3.1, 0.2};
    CHECK(capacity(fd) == doctest::Approx(168.4618).epsilon(1e-6));
    CHECK(max_wave_speed(fd) == doctest::Approx(1.55));
  }
}
