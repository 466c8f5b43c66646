#include "lwr/fes_pt.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "lwr/errors.hpp"

namespace lwr {

namespace {

enum Purpose : std::uint64_t {
  kControl = 101,
  kInit = 102,
  kSwap = 103,
  kPcnIn = 104,
  kPcnOut = 105,
};

std::shared_ptr<const Eigen::MatrixXd> basis_of(const LogOuPrior& prior) {
  auto kl = prior.shared_basis();
  return {kl, &kl->vectors};
}

}  // namespace

void FesPtConfig::validate(int truncation) const {
  auto fail = [](const std::string& what) { throw ConfigError("sampler config: " + what); };
  if (walkers < truncation + 2 || walkers < 3) fail("need at least truncation + 2 walkers");
  if (!(stretch_a > 1.0)) fail("stretch parameter a must exceed 1");
  double sum = 0.0;
  for (double p : move_probabilities) {
    if (!(p >= 0.0)) fail("move probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail("move probabilities must sum to 1");
  if (betas.empty() || !(betas.front() > 0.0 && betas.front() <= 1.0)) fail("inverse temperatures must lie in (0, 1]");
  for (std::size_t k = 1; k < betas.size(); ++k) {
    if (!(betas[k] < betas[k - 1] && betas[k] > 0.0)) fail("inverse temperatures must strictly decrease within (0, 1]");
  }
  if (pcn_omega_inlet.size() != betas.size() || pcn_omega_outlet.size() != betas.size()) {
    fail("one pCN step size per temperature is required for each boundary");
  }
  for (double w : pcn_omega_inlet) {
    if (!(w > 0.0 && w <= 1.0)) fail("pCN step sizes must lie in (0, 1]");
  }
  for (double w : pcn_omega_outlet) {
    if (!(w > 0.0 && w <= 1.0)) fail("pCN step sizes must lie in (0, 1]");
  }
  if (iterations < 0) fail("iterations must be non-negative");
  if (thin < 1) fail("thin must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (!(init_bc_scale > 0.0)) fail("init_bc_scale must be positive");
  if (!(burn_fraction >= 0.0 && burn_fraction < 1.0)) fail("burn_fraction must lie in [0, 1)");
}

FesPtSampler::FesPtSampler(const InverseProblem& problem, FesPtConfig config)
    : problem_(problem), config_(std::move(config)) {
  config_.validate(problem_.inlet_prior().truncation());
  const auto n = static_cast<Eigen::Index>(problem_.bc_size());
  projector_.add_identity(0, 4);
  projector_.add_basis(4, basis_of(problem_.inlet_prior()));
  projector_.add_basis(4 + n, basis_of(problem_.outlet_prior()));
}

FesPtState FesPtSampler::initialize() const {
  const std::size_t n_temps = config_.betas.size();
  const auto n_walkers = static_cast<std::size_t>(config_.walkers);
  FesPtState state;
  state.ensembles.assign(n_temps, std::vector<Walker>(n_walkers));
  state.chains.assign(n_temps, std::vector<std::vector<ChainSample>>(n_walkers));
  state.stats.assign(n_temps, {});
  state.swaps.assign(n_temps > 0 ? n_temps - 1 : 0, {});
  state.bc_in_density_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem_.bc_size()));
  state.bc_out_density_sum = state.bc_in_density_sum;

  const FdPriorBox& box = problem_.fd_box();
  constexpr int kMaxAttempts = 100;
  parallel_for(n_temps * n_walkers, config_.threads, [&](std::size_t task) {
    const std::size_t k = task / n_walkers, l = task % n_walkers;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Rng rng = make_stream(config_.seed, {kInit, k, l, static_cast<std::uint64_t>(attempt)});
      std::array<double, 4> fd{};
      for (int i = 0; i < 4; ++i) {
        fd[i] = std::uniform_real_distribution<double>(box.lower[i], box.upper[i])(rng);
      }
      const Eigen::VectorXd x_in = config_.init_bc_scale * problem_.inlet_prior().sample_x(rng);
      const Eigen::VectorXd x_out = config_.init_bc_scale * problem_.outlet_prior().sample_x(rng);
      Walker w;
      w.state = problem_.pack(fd, x_in, x_out);
      w.parts = problem_.evaluate(w.state);
      if (w.parts.finite()) {
        state.ensembles[k][l] = std::move(w);
        return;
      }
    }
    std::ostringstream msg;
    msg << "walker " << l << " at temperature " << k << " has -inf posterior after " << kMaxAttempts
        << " initialization attempts";
    throw NumericalError(msg.str());
  });
  record(state);
  return state;
}

void FesPtSampler::iterate(FesPtState& state) const {
  const long it = state.iteration + 1;
  const auto iter_key = static_cast<std::uint64_t>(it);
  const std::size_t n_temps = config_.betas.size();
  const auto n_walkers = static_cast<std::size_t>(config_.walkers);

  Rng control = make_stream(config_.seed, {iter_key, kControl});
  const double u = uniform01(control);
  int move = kMoveSwap;
  double cumulative = 0.0;
  for (int m = 0; m < 4; ++m) {
    cumulative += config_.move_probabilities[m];
    if (u < cumulative) {
      move = m;
      break;
    }
  }

  switch (move) {
    case kMoveStretch: {
      AiesOptions opts;
      opts.a = config_.stretch_a;
      opts.split = config_.split;
      opts.threads = std::max(1, config_.threads / static_cast<int>(n_temps));
      std::vector<MoveStats> per_temp(n_temps);
      parallel_for(n_temps, config_.threads, [&](std::size_t k) {
        const StreamKey key{config_.seed, iter_key, k};
        per_temp[k] = aies_update(state.ensembles[k], projector_, problem_, config_.betas[k], opts, key);
      });
      for (std::size_t k = 0; k < n_temps; ++k) state.stats[k].stretch += per_temp[k];
      break;
    }
    case kMovePcnInlet:
    case kMovePcnOutlet: {
      const bool inlet = move == kMovePcnInlet;
      const PcnBlock block{inlet ? 4 : 4 + static_cast<Eigen::Index>(problem_.bc_size()),
                           inlet ? &problem_.inlet_prior() : &problem_.outlet_prior()};
      const auto& omegas = inlet ? config_.pcn_omega_inlet : config_.pcn_omega_outlet;
      std::vector<char> accepted(n_temps * n_walkers, 0);
      parallel_for(n_temps * n_walkers, config_.threads, [&](std::size_t task) {
        const std::size_t k = task / n_walkers, l = task % n_walkers;
        Rng rng = StreamKey{config_.seed, iter_key, k}.rng(l, inlet ? kPcnIn : kPcnOut);
        accepted[task] = pcn_update(state.ensembles[k][l], block, omegas[k], problem_, config_.betas[k], rng);
      });
      for (std::size_t task = 0; task < accepted.size(); ++task) {
        MoveStats& s = inlet ? state.stats[task / n_walkers].pcn_inlet : state.stats[task / n_walkers].pcn_outlet;
        ++s.proposed;
        s.accepted += accepted[task];
      }
      break;
    }
    default: {
      if (n_temps < 2) break;
      for (std::size_t l = 0; l < n_walkers; ++l) {
        Rng rng = make_stream(config_.seed, {iter_key, kSwap, l});
        const std::size_t k = std::uniform_int_distribution<std::size_t>(0, n_temps - 2)(rng);
        const bool swapped = pt_swap(state.ensembles[k][l], state.ensembles[k + 1][l], config_.betas[k],
                                     config_.betas[k + 1], rng);
        ++state.swaps[k].proposed;
        state.swaps[k].accepted += swapped;
      }
      break;
    }
  }
  ++state.move_counts[move];
  state.iteration = it;
  if (it % config_.thin == 0) record(state);
}

void FesPtSampler::record(FesPtState& state) const {
  if (state.iteration % config_.thin != 0) return;
  for (std::size_t k = 0; k < state.ensembles.size(); ++k) {
    for (std::size_t l = 0; l < state.ensembles[k].size(); ++l) {
      const Walker& w = state.ensembles[k][l];
      state.chains[k][l].push_back(
          {state.iteration, {w.state(0), w.state(1), w.state(2), w.state(3)}, w.parts.loglik});
    }
  }
  const auto burn = static_cast<double>(config_.iterations) * config_.burn_fraction;
  if (static_cast<double>(state.iteration) > burn || (config_.iterations == 0 && state.iteration == 0)) {
    const auto n = static_cast<Eigen::Index>(problem_.bc_size());
    const Eigen::VectorXd& mu_in = problem_.inlet_prior().mu();
    const Eigen::VectorXd& mu_out = problem_.outlet_prior().mu();
    for (const Walker& w : state.ensembles.front()) {
      state.bc_in_density_sum += (mu_in + w.state.segment(4, n)).array().exp().matrix();
      state.bc_out_density_sum += (mu_out + w.state.segment(4 + n, n)).array().exp().matrix();
      ++state.bc_mean_count;
    }
  }
}

void FesPtSampler::run(FesPtState& state, const Hook& hook) const {
  while (state.iteration < config_.iterations) {
    iterate(state);
    if (hook && !hook(state)) break;
  }
}

FesPtState fes_pt_run(const InverseProblem& problem, const FesPtConfig& config) {
  const FesPtSampler sampler(problem, config);
  FesPtState state = sampler.initialize();
  sampler.run(state);
  return state;
}

namespace {

nlohmann::json stats_json(const MoveStats& s) { return {s.proposed, s.accepted}; }
MoveStats stats_from(const nlohmann::json& j) { return {j.at(0).get<long>(), j.at(1).get<long>()}; }

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const FesPtState& state) {
  nlohmann::json j;
  j["iteration"] = state.iteration;
  j["move_counts"] = state.move_counts;
  auto& ens = j["ensembles"] = nlohmann::json::array();
  for (const auto& temp : state.ensembles) {
    auto t = nlohmann::json::array();
    for (const auto& w : temp) t.push_back({{"state", to_vec(w.state)}, {"loglik", w.parts.loglik}, {"logprior", w.parts.logprior}});
    ens.push_back(std::move(t));
  }
  auto& chains = j["chains"] = nlohmann::json::array();
  for (const auto& temp : state.chains) {
    auto t = nlohmann::json::array();
    for (const auto& walker : temp) {
      auto rows = nlohmann::json::array();
      for (const auto& s : walker) rows.push_back({s.iteration, s.fd[0], s.fd[1], s.fd[2], s.fd[3], s.loglik});
      t.push_back(std::move(rows));
    }
    chains.push_back(std::move(t));
  }
  auto& stats = j["stats"] = nlohmann::json::array();
  for (const auto& s : state.stats) {
    stats.push_back({{"stretch", stats_json(s.stretch)},
                     {"pcn_inlet", stats_json(s.pcn_inlet)},
                     {"pcn_outlet", stats_json(s.pcn_outlet)}});
  }
  auto& swaps = j["swaps"] = nlohmann::json::array();
  for (const auto& s : state.swaps) swaps.push_back(stats_json(s));
  j["bc_in_density_sum"] = to_vec(state.bc_in_density_sum);
  j["bc_out_density_sum"] = to_vec(state.bc_out_density_sum);
  j["bc_mean_count"] = state.bc_mean_count;
  return j;
}

FesPtState state_from_json(const nlohmann::json& j) {
  FesPtState state;
  state.iteration = j.at("iteration").get<long>();
  state.move_counts = j.at("move_counts").get<std::array<long, 4>>();
  for (const auto& temp : j.at("ensembles")) {
    std::vector<Walker> walkers;
    for (const auto& w : temp) {
      walkers.push_back({from_vec(w.at("state").get<std::vector<double>>()),
                         {w.at("loglik").get<double>(), w.at("logprior").get<double>()}});
    }
    state.ensembles.push_back(std::move(walkers));
  }
  for (const auto& temp : j.at("chains")) {
    std::vector<std::vector<ChainSample>> t;
    for (const auto& walker : temp) {
      std::vector<ChainSample> rows;
      for (const auto& r : walker) {
        rows.push_back({r.at(0).get<long>(),
                        {r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>(), r.at(4).get<double>()},
                        r.at(5).get<double>()});
      }
      t.push_back(std::move(rows));
    }
    state.chains.push_back(std::move(t));
  }
  for (const auto& s : j.at("stats")) {
    state.stats.push_back({stats_from(s.at("stretch")), stats_from(s.at("pcn_inlet")), stats_from(s.at("pcn_outlet"))});
  }
  for (const auto& s : j.at("swaps")) state.swaps.push_back(stats_from(s));
  state.bc_in_density_sum = from_vec(j.at("bc_in_density_sum").get<std::vector<double>>());
  state.bc_out_density_sum = from_vec(j.at("bc_out_density_sum").get<std::vector<double>>());
  state.bc_mean_count = j.at("bc_mean_count").get<long>();
  return state;
}

}  // namespace lwr
