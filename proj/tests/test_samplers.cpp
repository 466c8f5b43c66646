#include <doctest.h>

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "lwr/commands.hpp"
#include "lwr/diagnostics.hpp"
#include "lwr/errors.hpp"
#include "lwr/fes_pt.hpp"
#include "lwr/samplers.hpp"
#include "small_problem.hpp"
#include "toy_targets.hpp"

using namespace lwr;
using namespace lwr::testing;

namespace {

Eigen::MatrixXd projector_matrix(const BlockProjector& p, Eigen::Index n) {
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m.col(i) = p.apply(Eigen::VectorXd::Unit(n, i));
  return m;
}

// Pair counts of (bin before, bin after) for a scalar statistic; a
// reversible kernel gives a symmetric table up to Monte Carlo error.
template <std::size_t B>
void check_symmetric(const std::array<std::array<double, B>, B>& n) {
  for (std::size_t a = 0; a < B; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const double total = n[a][b] + n[b][a];
      if (total == 0.0) continue;
      CHECK(std::abs(n[a][b] - n[b][a]) <= 4.0 * std::sqrt(total));
    }
  }
}

int bin4(double v) { return v < -0.7 ? 0 : v < 0.0 ? 1 : v < 0.7 ? 2 : 3; }

std::vector<Walker> gaussian_ensemble(const Target& t, int walkers, Eigen::Index dim, std::uint64_t seed,
                                      double scale = 1.0) {
  std::vector<Walker> e(static_cast<std::size_t>(walkers));
  Rng rng = make_stream(seed, {});
  for (auto& w : e) {
    w.state.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) w.state(i) = scale * std_normal(rng);
    w.parts = t.evaluate(w.state);
  }
  return e;
}

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("stretch factor") {
    CHECK(stretch_z(2.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(stretch_z(2.0, 1.0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(stretch_z(2.0, 0.5) == doctest::Approx(1.125).epsilon(1e-15));
    CHECK(stretch_z(3.0, 0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(stretch_z(1.0, 0.5), DomainError);
    const double exact = (2.0 + 0.5 + 1.0) / 3.0;
    CHECK(stretch_mean_quadrature(2.0) == doctest::Approx(exact).epsilon(1e-8));
    Rng rng = make_stream(1, {});
    double sum = 0.0;
    constexpr int kDraws = 1000000;
    for (int i = 0; i < kDraws; ++i) sum += stretch_z(2.0, rng);
    CHECK(sum / kDraws == doctest::Approx(stretch_mean_quadrature(2.0)).epsilon(0.01));
  }

  TEST_CASE("random-walk Metropolis") {
    Rng rng = make_stream(2, {});
    const RwmResult flat = rwm([](const Eigen::VectorXd&) { return 0.0; }, Eigen::VectorXd::Zero(3),
                               Eigen::MatrixXd::Identity(3, 3), 1000, rng);
    CHECK(flat.acceptance_rate == 1.0);

    const Eigen::VectorXd sd = Eigen::VectorXd::Ones(2);
    const RwmResult normal = rwm([&](const Eigen::VectorXd& x) { return diag_gaussian(x, sd); },
                                Eigen::VectorXd::Zero(2), 2.8 * Eigen::MatrixXd::Identity(2, 2), 100000, rng);
    for (int c = 0; c < 2; ++c) {
      std::vector<double> col(normal.chain.rows());
      for (Eigen::Index i = 0; i < normal.chain.rows(); ++i) col[i] = normal.chain(i, c);
      const double mean = normal.chain.col(c).mean();
      const double se = 1.0 / std::sqrt(effective_sample_size(col));
      CHECK(std::abs(mean) <= 3.0 * se);
    }
    CHECK(normal.acceptance_rate > 0.2);
    CHECK(normal.acceptance_rate < 0.6);
    CHECK_THROWS_AS(rwm([](const Eigen::VectorXd&) { return 0.0; }, Eigen::VectorXd::Zero(2),
                        -Eigen::MatrixXd::Identity(2, 2), 10, rng),
                    DomainError);
  }

  TEST_CASE("direct fit acceptance with the reference proposal covariance") {
    // A smooth diagram and 8 detectors x 49 minutes of densities below 350,
    // the regime the reference covariance was tuned for.
    const DelCastilloParams truth{250.0, 550.0, 5.5, 1.0};
    Rng rng = make_stream(3, {});
    std::vector<FlowDensityPoint> data;
    for (int i = 0; i < 8 * 49; ++i) {
      const double rho = 5.0 + 345.0 * uniform01(rng);
      data.push_back({rho, static_cast<double>(std::poisson_distribution<long>(delcastillo_flow(rho, truth))(rng))});
    }
    const FdPriorBox box;
    auto target = [&](const Eigen::VectorXd& p) {
      const std::array<double, 4> a{p(0), p(1), p(2), p(3)};
      if (!box.contains(a)) return -std::numeric_limits<double>::infinity();
      return direct_fit_loglik(DelCastilloParams::from_array(a), data);
    };
    Eigen::VectorXd init(4);
    init << 250.0, 550.0, 5.5, 1.0;
    const RwmResult r = rwm(target, init, direct_fit_proposal_covariance(), 5000, rng);
    MESSAGE("direct-fit acceptance " << r.acceptance_rate);
    CHECK(r.acceptance_rate >= 0.10);
    CHECK(r.acceptance_rate <= 0.45);
  }

  TEST_CASE("projector algebra") {
    const Grid g = small_twin_grid();
    const LogOuPrior prior = small_prior(g, 70.0);
    const auto n = static_cast<Eigen::Index>(prior.size());
    BlockProjector p;
    p.add_identity(0, 4);
    p.add_basis(4, std::make_shared<const Eigen::MatrixXd>(prior.basis().vectors));
    p.add_basis(4 + n, std::make_shared<const Eigen::MatrixXd>(prior.basis().vectors));
    CHECK(p.moved_dimension() == 12);
    const Eigen::Index dim = 4 + 2 * n;
    const Eigen::MatrixXd pm = projector_matrix(p, dim);
    const Eigen::MatrixXd qm = Eigen::MatrixXd::Identity(dim, dim) - pm;
    CHECK((pm * pm - pm).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((qm * qm - qm).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pm * qm).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pm - pm.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Rng rng = make_stream(4, {});
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = std_normal(rng);
    CHECK((p.apply(v) + p.complement(v) - v).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("stretch proposal and acceptance") {
    BlockProjector p;
    p.add_identity(0, 3);
    Eigen::VectorXd a(3), b(3);
    a << 1, 2, 3;
    b << 2, 2, 5;
    CHECK(stretch_proposal(a, b, 1.0, p) == a);
    const Eigen::VectorXd y = stretch_proposal(a, b, 0.5, p);
    CHECK(y(0) == doctest::Approx(1.5));
    CHECK(y(2) == doctest::Approx(4.0));
    CHECK(stretch_acceptance(1.0, 12, -3.0, -3.0) == 1.0);
    CHECK(stretch_acceptance(0.5, 12, 0.0, 0.0) == doctest::Approx(std::pow(0.5, 11)));
    CHECK(stretch_acceptance(2.0, 12, 0.0, 0.0) == 1.0);
    CHECK(stretch_acceptance(1.5, 3, -std::numeric_limits<double>::infinity(), 0.0) == 0.0);
  }

  TEST_CASE("stretch sweeps keep a Gaussian's moments") {
    const Eigen::Index dim = 3;
    Eigen::VectorXd sd(dim);
    sd << 1.0, 5.0, 0.2;
    FunctionTarget t(dim, [&](const Eigen::VectorXd& x) { return diag_gaussian(x, sd); });
    BlockProjector p;
    p.add_identity(0, dim);
    std::vector<Walker> e = gaussian_ensemble(t, 10, dim, 5);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
    long count = 0;
    for (std::uint64_t it = 0; it < 20000; ++it) {
      aies_update(e, p, t, 1.0, {}, StreamKey{6, it, 0});
      if (it < 2000) continue;
      for (const auto& w : e) {
        sum += w.state;
        sq += w.state.cwiseProduct(w.state);
        ++count;
      }
    }
    const Eigen::VectorXd var = sq / count - (sum / count).cwiseAbs2();
    for (Eigen::Index i = 0; i < dim; ++i) CHECK(std::sqrt(var(i)) == doctest::Approx(sd(i)).epsilon(0.05));
  }

  TEST_CASE("stretch moves are affine equivariant") {
    const Eigen::Index dim = 4;
    Eigen::MatrixXd a(dim, dim);
    a << 2, 0.3, 0, 0, 0.1, 1, 0, 0.5, 0, 0, 3, 0, 1, 0, 0, 0.5;
    const Eigen::MatrixXd a_inv = a.inverse();
    Eigen::VectorXd sd(dim);
    sd << 1, 2, 0.5, 3;
    FunctionTarget tx(dim, [&](const Eigen::VectorXd& x) { return diag_gaussian(x, sd); });
    FunctionTarget ty(dim, [&](const Eigen::VectorXd& y) { return diag_gaussian(a_inv * y, sd); });
    BlockProjector p;
    p.add_identity(0, dim);
    std::vector<Walker> ex = gaussian_ensemble(tx, 8, dim, 7);
    std::vector<Walker> ey = ex;
    for (auto& w : ey) {
      w.state = a * w.state;
      w.parts = ty.evaluate(w.state);
    }
    MoveStats sx, sy;
    for (std::uint64_t it = 0; it < 300; ++it) {
      sx += aies_update(ex, p, tx, 1.0, {}, StreamKey{8, it, 0});
      sy += aies_update(ey, p, ty, 1.0, {}, StreamKey{8, it, 0});
    }
    CHECK(sx.accepted == sy.accepted);
    double worst = 0.0;
    for (std::size_t i = 0; i < ex.size(); ++i) worst = std::max(worst, (a * ex[i].state - ey[i].state).norm());
    CHECK(worst < 1e-8);
  }

  TEST_CASE("complementary halves are thread-count invariant") {
    const Eigen::Index dim = 3;
    const Eigen::VectorXd sd = Eigen::VectorXd::Ones(dim);
    FunctionTarget t(dim, [&](const Eigen::VectorXd& x) { return diag_gaussian(x, sd); });
    BlockProjector p;
    p.add_identity(0, dim);
    std::vector<Walker> e1 = gaussian_ensemble(t, 10, dim, 9), e2 = e1;
    for (std::uint64_t it = 0; it < 50; ++it) {
      aies_update(e1, p, t, 1.0, {2.0, EnsembleSplit::Halves, 1}, StreamKey{10, it, 0});
      aies_update(e2, p, t, 1.0, {2.0, EnsembleSplit::Halves, 3}, StreamKey{10, it, 0});
    }
    for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i].state == e2[i].state);
  }

  TEST_CASE("pCN proposals") {
    const Grid g = small_twin_grid();
    const LogOuPrior prior = small_prior(g, 70.0);
    const Eigen::MatrixXd& j = prior.basis().vectors;
    Rng rng = make_stream(11, {});
    const Eigen::VectorXd x1 = prior.sample_x(rng), x2 = prior.sample_x(rng), xi = prior.sample_x(rng);
    // omega = 1 refreshes the complement completely.
    const Eigen::VectorXd y1 = pcn_proposal(x1, xi, 1.0, j), y2 = pcn_proposal(x2, xi, 1.0, j);
    CHECK((prior.project_high(y1) - prior.project_high(y2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((prior.project_high(y1) - prior.project_high(xi)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(pcn_proposal(x1, xi, 0.0, j), DomainError);
    CHECK_THROWS_AS(pcn_proposal(x1, xi, 1.5, j), DomainError);

    // Coordinates outside the block are untouched and the KL coordinates
    // move only by rounding.
    const auto n = static_cast<Eigen::Index>(prior.size());
    FunctionTarget t(4 + 2 * n, [](const Eigen::VectorXd&) { return 0.0; });
    Walker w;
    w.state.resize(4 + 2 * n);
    w.state.head(4) << 250, 500, 3.1, 0.2;
    w.state.segment(4, n) = x1;
    w.state.segment(4 + n, n) = x2;
    w.parts = t.evaluate(w.state);
    const Walker before = w;
    for (int k = 0; k < 20; ++k) CHECK(pcn_update(w, PcnBlock{4, &prior}, 0.3, t, 1.0, rng));
    CHECK(w.state.head(4) == before.state.head(4));
    CHECK(w.state.segment(4 + n, n) == before.state.segment(4 + n, n));
    const Eigen::VectorXd kl_before = j.transpose() * before.state.segment(4, n);
    const Eigen::VectorXd kl_after = j.transpose() * w.state.segment(4, n);
    CHECK((kl_before - kl_after).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.state.segment(4, n) - before.state.segment(4, n)).norm() > 0.1);
  }

  TEST_CASE("swap probabilities") {
    CHECK(pt_swap_probability(1.0, 0.5, -10.0, -10.0) == 1.0);
    CHECK(pt_swap_probability(0.7, 0.7, -10.0, -3.0) == 1.0);
    CHECK(pt_swap_probability(1.0, 0.5, -10.0, -12.0) == doctest::Approx(std::exp(-1.0)));
    CHECK(pt_swap_probability(1.0, 0.5, -12.0, -10.0) == 1.0);
    Walker a, b;
    a.state = Eigen::VectorXd::Constant(1, 1.0);
    b.state = Eigen::VectorXd::Constant(1, 2.0);
    a.parts.loglik = b.parts.loglik = -4.0;
    Rng rng = make_stream(12, {});
    CHECK(pt_swap(a, b, 1.0, 0.5, rng));
    CHECK(a.state(0) == 2.0);
    CHECK(b.state(0) == 1.0);
    CHECK(estimated_swap_rate({-1.0, -1.0}, {-1.0, -3.0}, 1.0, 0.5) == doctest::Approx(0.5 * (1.0 + std::exp(-1.0))));
  }

  TEST_CASE("detailed balance of the kernels") {
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    SUBCASE("random walk") {
      const RwmKernel k(Eigen::MatrixXd::Constant(1, 1, 1.5));
      auto target = [&](const Eigen::VectorXd& x) { return diag_gaussian(x, one); };
      Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
      double lp = target(x);
      std::array<std::array<double, 4>, 4> n{};
      Rng rng = make_stream(13, {});
      for (int it = 0; it < 200000; ++it) {
        const int a = bin4(x(0));
        k.step(x, lp, target, rng);
        n[a][bin4(x(0))] += 1.0;
      }
      check_symmetric(n);
    }
    SUBCASE("pCN") {
      const Grid g = small_twin_grid();
      const LogOuPrior prior = small_prior(g, 70.0);
      const auto n_bc = static_cast<Eigen::Index>(prior.size());
      FunctionTarget t(n_bc, [&](const Eigen::VectorXd& x) { return -2.0 * std::pow(x.mean() - 0.2, 2); });
      Rng rng = make_stream(14, {});
      Walker w;
      w.state = prior.sample_x(rng);
      w.parts = t.evaluate(w.state);
      std::array<std::array<double, 4>, 4> n{};
      const double scale = std::sqrt(prior.ou().stationary_variance());
      for (int it = 0; it < 100000; ++it) {
        const int a = bin4(w.state(n_bc - 1) / scale);
        pcn_update(w, PcnBlock{0, &prior}, 0.5, t, 1.0, rng);
        n[a][bin4(w.state(n_bc - 1) / scale)] += 1.0;
      }
      check_symmetric(n);
    }
    SUBCASE("replica swap") {
      // Exact draws from the product of tempered Gaussians, one swap each.
      const double b_cold = 1.0, b_hot = 0.4;
      std::array<std::array<double, 4>, 4> n{};
      Rng rng = make_stream(15, {});
      for (int it = 0; it < 200000; ++it) {
        Walker c, h;
        c.state = Eigen::VectorXd::Constant(1, std_normal(rng) / std::sqrt(b_cold));
        h.state = Eigen::VectorXd::Constant(1, std_normal(rng) / std::sqrt(b_hot));
        c.parts.loglik = -0.5 * c.state.squaredNorm();
        h.parts.loglik = -0.5 * h.state.squaredNorm();
        const int a = bin4(c.state(0));
        pt_swap(c, h, b_cold, b_hot, rng);
        n[a][bin4(c.state(0))] += 1.0;
      }
      check_symmetric(n);
    }
  }

  TEST_CASE("temperature schedule tuning") {
    CHECK(fallback_schedule() == std::vector<double>{1.0, 0.76, 0.58, 0.44});
    Rng rng = make_stream(16, {});
    const TunedSchedule failed = tune_schedule(
        [](double, Rng&) -> std::vector<double> { throw NumericalError("pilot diverged"); }, {}, rng);
    CHECK(failed.fallback);
    CHECK(failed.betas == fallback_schedule());

    // 10-d Gaussian likelihood, flat prior: tempered draws are exact.
    constexpr int kDim = 10;
    auto pilot = [](double beta, Rng& r) {
      std::vector<double> ll(2000);
      for (double& l : ll) {
        double s = 0.0;
        for (int i = 0; i < kDim; ++i) s += std::pow(std_normal(r), 2) / beta;
        l = -0.5 * s;
      }
      return ll;
    };
    const TunedSchedule tuned = tune_schedule(pilot, {}, rng);
    REQUIRE_FALSE(tuned.fallback);
    CHECK(tuned.betas.size() == 4);
    CHECK(tuned.betas[0] == 1.0);
    for (std::size_t k = 1; k < 4; ++k) {
      CHECK(tuned.betas[k] / tuned.betas[k - 1] == doctest::Approx(tuned.ratio).epsilon(1e-12));
    }
    CHECK(tuned.pilot_swap_rate == doctest::Approx(0.23).epsilon(0.15));

    // Realised swap rates of a tempered random-walk run with that schedule.
    const Eigen::VectorXd sd = Eigen::VectorXd::Ones(kDim);
    auto loglik = [&](const Eigen::VectorXd& x) { return diag_gaussian(x, sd); };
    std::vector<Walker> chains(4);
    std::vector<RwmKernel> kernels;
    for (std::size_t k = 0; k < 4; ++k) {
      chains[k].state = Eigen::VectorXd::Zero(kDim);
      chains[k].parts.loglik = 0.0;
      const double step = 2.38 * 2.38 / kDim / tuned.betas[k];
      kernels.emplace_back(step * Eigen::MatrixXd::Identity(kDim, kDim));
    }
    std::array<MoveStats, 3> swaps{};
    for (int it = 0; it < 40000; ++it) {
      for (std::size_t k = 0; k < 4; ++k) {
        const double beta = tuned.betas[k];
        double lp = beta * chains[k].parts.loglik;
        for (int s = 0; s < 5; ++s) kernels[k].step(chains[k].state, lp, [&](const Eigen::VectorXd& x) { return beta * loglik(x); }, rng);
        chains[k].parts.loglik = loglik(chains[k].state);
      }
      const auto pair = static_cast<std::size_t>(uniform01(rng) * 3);
      ++swaps[pair].proposed;
      if (pt_swap(chains[pair], chains[pair + 1], tuned.betas[pair], tuned.betas[pair + 1], rng)) ++swaps[pair].accepted;
    }
    for (const auto& s : swaps) {
      MESSAGE("swap rate " << s.rate());
      CHECK(s.rate() >= 0.10);
      CHECK(s.rate() <= 0.40);
    }
  }

  TEST_CASE("sampler configuration validation") {
    FesPtConfig c;
    CHECK_NOTHROW(c.validate(4));
    c.walkers = 5;
    CHECK_THROWS_AS(c.validate(4), ConfigError);
    c = {};
    c.move_probabilities = {0.5, 0.5, 0.5, 0.0};
    CHECK_THROWS_AS(c.validate(4), ConfigError);
    c = {};
    c.betas = {1.0, 0.8, 0.9, 0.5};
    CHECK_THROWS_AS(c.validate(4), ConfigError);
    c = {};
    c.pcn_omega_inlet = {0.1};
    CHECK_THROWS_AS(c.validate(4), ConfigError);
    c = {};
    c.pcn_omega_outlet[2] = 1.5;
    CHECK_THROWS_AS(c.validate(4), ConfigError);
  }

  TEST_CASE("functional ensemble sampler with tempering") {
    const Twin twin = small_twin(CountNoise::Poisson);
    const InverseProblem problem = small_problem(twin);
    FesPtConfig cfg;
    cfg.seed = 17;
    cfg.thin = 5;

    SUBCASE("zero iterations leave the initial ensemble") {
      cfg.iterations = 0;
      const FesPtSampler sampler(problem, cfg);
      const FesPtState init = sampler.initialize();
      FesPtState run = init;
      sampler.run(run);
      CHECK(run.iteration == 0);
      for (std::size_t k = 0; k < init.ensembles.size(); ++k) {
        for (std::size_t l = 0; l < init.ensembles[k].size(); ++l) {
          CHECK(run.ensembles[k][l].state == init.ensembles[k][l].state);
        }
      }
      for (const auto& ens : init.ensembles) {
        for (const auto& w : ens) {
          CHECK(w.parts.finite());
          CHECK(problem.fd_box().contains({w.state(0), w.state(1), w.state(2), w.state(3)}));
        }
      }
    }

    SUBCASE("short runs are reproducible and serialise losslessly") {
      cfg.iterations = 40;
      const FesPtState a = fes_pt_run(problem, cfg);
      const FesPtState b = fes_pt_run(problem, cfg);
      CHECK(to_json(a) == to_json(b));
      CHECK(a.iteration == 40);
      long moves = 0;
      for (long m : a.move_counts) moves += m;
      CHECK(moves == 40);
      CHECK(a.chains[0][0].size() == 9);  // iterations 0, 5, ..., 40
      const FesPtState c = state_from_json(to_json(a));
      CHECK(to_json(c) == to_json(a));
      for (std::size_t k = 0; k < a.ensembles.size(); ++k) {
        for (std::size_t l = 0; l < a.ensembles[k].size(); ++l) {
          CHECK(c.ensembles[k][l].state == a.ensembles[k][l].state);
          CHECK(c.ensembles[k][l].parts.loglik == a.ensembles[k][l].parts.loglik);
          // Cached evaluations stay consistent with the states.
          const LogDensityParts fresh = problem.evaluate(a.ensembles[k][l].state);
          CHECK(fresh.loglik == a.ensembles[k][l].parts.loglik);
          CHECK(fresh.logprior == a.ensembles[k][l].parts.logprior);
        }
      }
    }

    SUBCASE("resuming matches an uninterrupted run") {
      cfg.iterations = 30;
      const FesPtState full = fes_pt_run(problem, cfg);
      const FesPtSampler sampler(problem, cfg);
      FesPtState part = sampler.initialize();
      sampler.run(part, [](const FesPtState& s) { return s.iteration < 12; });
      CHECK(part.iteration == 12);
      FesPtState resumed = state_from_json(to_json(part));
      sampler.run(resumed);
      CHECK(to_json(resumed) == to_json(full));
    }

    SUBCASE("threads do not change the halves variant") {
      cfg.iterations = 20;
      cfg.split = EnsembleSplit::Halves;
      const FesPtState one = fes_pt_run(problem, cfg);
      cfg.threads = 3;
      const FesPtState three = fes_pt_run(problem, cfg);
      CHECK(to_json(one) == to_json(three));
    }

  }

  TEST_CASE("single-temperature pCN acceptance band") {
    const Twin twin = small_twin(CountNoise::Poisson);
    const InverseProblem problem = small_problem(twin);
    FesPtConfig cfg;
    cfg.seed = 17;
    cfg.thin = 5;
    cfg.betas = {1.0};
    cfg.pcn_omega_inlet = {0.155};
    cfg.pcn_omega_outlet = {0.078};
    cfg.move_probabilities = {0.5, 0.25, 0.25, 0.0};
    cfg.iterations = 2000;
    const FesPtSampler sampler(problem, cfg);
    FesPtState s = sampler.initialize();
    // Rates over the second half only.
    TemperatureStats at_half;
    sampler.run(s, [&](const FesPtState& x) {
      if (x.iteration == cfg.iterations / 2) at_half = x.stats[0];
      return true;
    });
    CHECK(s.move_counts[kMoveSwap] == 0);
    auto since = [](MoveStats end, const MoveStats& start) {
      end.proposed -= start.proposed;
      end.accepted -= start.accepted;
      return end;
    };
    const MoveStats in = since(s.stats[0].pcn_inlet, at_half.pcn_inlet);
    const MoveStats out = since(s.stats[0].pcn_outlet, at_half.pcn_outlet);
    const MoveStats stretch = since(s.stats[0].stretch, at_half.stretch);
    MESSAGE("pCN inlet " << in.rate() << ", outlet " << out.rate() << ", stretch " << stretch.rate());
    CHECK(in.rate() >= 0.10);
    CHECK(in.rate() <= 0.60);
    CHECK(out.rate() >= 0.10);
    CHECK(out.rate() <= 0.60);
    CHECK(stretch.rate() > 0.0);
  }
}
