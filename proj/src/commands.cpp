#include "lwr/commands.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "lwr/csv.hpp"
#include "lwr/diagnostics.hpp"
#include "lwr/errors.hpp"
#include "lwr/prior.hpp"
#include "lwr/samplers.hpp"

namespace lwr {

namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void on_interrupt(int) { g_interrupted = 1; }

constexpr std::array<const char*, 4> kFdNames{"z", "rho_j", "u", "omega"};

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::vector<double> minutes_to(double t_final) {
  std::vector<double> t;
  for (int k = 0; k <= static_cast<int>(std::floor(t_final + 1e-9)); ++k) t.push_back(k);
  return t;
}

OuParams ou_params(const RunConfig& c) { return {c.ou.beta, c.ou.sigma, c.grid.bc_dt}; }

ObservationOptions observation_options(const RunConfig& c) {
  return {c.data.sampling, c.data.window, c.data.flow_floor, c.solver};
}

std::vector<double> exp_of(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::ranges::transform(v, out.begin(), [](double x) { return std::exp(x); });
  return out;
}

std::string walker_file(std::size_t k, std::size_t l) {
  std::ostringstream s;
  s << "T" << k << "_W" << std::setw(2) << std::setfill('0') << l << ".csv";
  return s.str();
}

/// Config fields that may change between a checkpoint and its resumption.
nlohmann::json resumable_view(nlohmann::json j) {
  j["sampler"].erase("iterations");
  j["sampler"].erase("threads");
  j["sampler"].erase("checkpoint_every");
  j["output"].erase("dir");
  return j;
}

std::vector<std::string> write_run_outputs(const fs::path& dir, const FesPtState& state, const FesPtConfig& sampler,
                                           const InverseProblem& problem) {
  std::vector<std::string> files;
  fs::create_directories(dir / "chains");
  for (std::size_t k = 0; k < state.chains.size(); ++k) {
    for (std::size_t l = 0; l < state.chains[k].size(); ++l) {
      std::vector<std::vector<double>> rows;
      for (const auto& s : state.chains[k][l]) {
        rows.push_back({static_cast<double>(s.iteration), s.fd[0], s.fd[1], s.fd[2], s.fd[3], s.loglik});
      }
      const std::string name = "chains/" + walker_file(k, l);
      csv::write(dir / name, {"iteration", "z", "rho_j", "u", "omega", "loglik"}, rows);
      files.push_back(name);
    }
  }

  const auto n = static_cast<Eigen::Index>(problem.bc_size());
  const double bc_dt = problem.grid().bc_dt;
  if (state.bc_mean_count > 0) {
    const Eigen::VectorXd in = state.bc_in_mean(), out = state.bc_out_mean();
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < n; ++i) rows.push_back({static_cast<double>(i) * bc_dt, in(i), out(i)});
    csv::write(dir / "bc_mean.csv", {"t", "inlet", "outlet"}, rows);
    files.push_back("bc_mean.csv");
  }

  {
    const auto& cold = state.ensembles.front();
    std::vector<std::string> header{"t"};
    for (std::size_t l = 0; l < cold.size(); ++l) header.push_back("inlet_w" + std::to_string(l));
    for (std::size_t l = 0; l < cold.size(); ++l) header.push_back("outlet_w" + std::to_string(l));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& row = rows[static_cast<std::size_t>(i)];
      row.push_back(static_cast<double>(i) * bc_dt);
      for (const auto& w : cold) row.push_back(std::exp(problem.inlet_prior().mu()(i) + w.state(4 + i)));
      for (const auto& w : cold) row.push_back(std::exp(problem.outlet_prior().mu()(i) + w.state(4 + n + i)));
    }
    csv::write(dir / "bc_snapshot.csv", header, rows);
    files.push_back("bc_snapshot.csv");
  }

  std::vector<std::vector<double>> acc;
  for (std::size_t k = 0; k < state.stats.size(); ++k) {
    const auto& s = state.stats[k];
    acc.push_back({static_cast<double>(k), sampler.betas[k], s.stretch.rate(), s.pcn_inlet.rate(), s.pcn_outlet.rate()});
  }
  csv::write(dir / "acceptance.csv", {"temperature", "beta", "stretch", "pcn_inlet", "pcn_outlet"}, acc);
  files.push_back("acceptance.csv");

  std::vector<std::vector<double>> swaps;
  for (std::size_t k = 0; k < state.swaps.size(); ++k) {
    swaps.push_back({static_cast<double>(k), static_cast<double>(k + 1), static_cast<double>(state.swaps[k].proposed),
                     state.swaps[k].rate()});
  }
  csv::write(dir / "swaps.csv", {"cold", "hot", "proposed", "rate"}, swaps);
  files.push_back("swaps.csv");
  return files;
}

TunedSchedule tune_temperatures(const InverseProblem& problem, const RunConfig& cfg, bool quiet) {
  const PilotFn pilot = [&](double beta, Rng& rng) {
    FesPtConfig pc = cfg.sampler;
    pc.betas = {beta};
    pc.pcn_omega_inlet = {cfg.sampler.pcn_omega_inlet.front()};
    pc.pcn_omega_outlet = {cfg.sampler.pcn_omega_outlet.front()};
    const double keep = 1.0 - pc.move_probabilities[kMoveSwap];
    for (double& p : pc.move_probabilities) p /= keep;
    pc.move_probabilities[kMoveSwap] = 0.0;
    pc.iterations = cfg.extras.pilot_iterations;
    pc.thin = static_cast<int>(pc.iterations);
    pc.seed = rng();
    const FesPtSampler sampler(problem, pc);
    FesPtState state = sampler.initialize();
    std::vector<double> ll;
    sampler.run(state, [&](const FesPtState& s) {
      if (2 * s.iteration > pc.iterations) {
        for (const auto& w : s.ensembles.front()) ll.push_back(w.parts.loglik);
      }
      return true;
    });
    if (!quiet) std::clog << "pilot at beta " << beta << ": " << ll.size() << " log-likelihood samples\n";
    return ll;
  };
  TuneOptions opts;
  opts.n_temperatures = static_cast<int>(cfg.sampler.betas.size());
  Rng rng = make_stream(cfg.sampler.seed, {0x7475'6e65});
  return tune_schedule(pilot, opts, rng);
}

struct ChainTable {
  std::vector<std::vector<std::vector<double>>> walkers;  // [walker][row][col]
};

ChainTable read_cold_chains(const fs::path& run_dir, int walkers) {
  ChainTable t;
  for (int l = 0; l < walkers; ++l) {
    const csv::Table table = csv::read(run_dir / "chains" / walker_file(0, static_cast<std::size_t>(l)));
    std::vector<std::vector<double>> rows;
    for (const auto& r : table.rows) {
      std::vector<double> v;
      for (const auto& f : r) v.push_back(csv::to_double(f));
      rows.push_back(std::move(v));
    }
    t.walkers.push_back(std::move(rows));
  }
  return t;
}

}  // namespace

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

Eigen::Matrix4d direct_fit_proposal_covariance() {
  Eigen::Matrix4d c;
  c << 182.292318, -288.07905, -2.34389543, 1.21897887,  //
      -288.07905, 561.808314, 5.26749447, -1.7470824,     //
      -2.34389543, 5.26749447, 0.08204741, -0.00839764,   //
      1.21897887, -1.7470824, -0.00839764, 0.00931977;
  return c;
}

ObservationSet load_observations(const RunConfig& config, const fs::path& path) {
  if (path.empty()) throw ConfigError("no observations given (data.observations or --observations)");
  const int burn_in = config.data.burn_in >= 0 ? config.data.burn_in : default_burn_in(config.grid.road_length);
  const csv::Table head = csv::read(path);
  if (std::ranges::find(head.header, "detector_km") != head.header.end()) return load_observation_csv(path, burn_in);
  const DetectorData data = load_detector_csv(path, config.data.max_faulty_fraction);
  for (const auto& line : data.log) std::clog << line << '\n';
  if (data.records.empty()) throw DataError("no usable detector records in '" + path.string() + "'");
  return to_observations(data.records, burn_in);
}

InverseProblem build_problem(const RunConfig& config, ObservationSet observations) {
  LogOuPrior inlet(Eigen::Map<const Eigen::VectorXd>(build_mu(config.ou.inlet, config.grid).data(),
                                                     static_cast<Eigen::Index>(config.grid.bc_length())),
                   ou_params(config), config.ou.truncation);
  const std::vector<double> mu_out = build_mu(config.ou.outlet, config.grid);
  LogOuPrior outlet(Eigen::Map<const Eigen::VectorXd>(mu_out.data(), static_cast<Eigen::Index>(mu_out.size())),
                    ou_params(config), inlet.shared_basis());
  return InverseProblem(config.grid, std::move(observations), std::move(inlet), std::move(outlet), config.fd_prior,
                        observation_options(config));
}

Eigen::MatrixXd residual_grid(const ObservationSet& observations, const Eigen::MatrixXd& predicted) {
  if (predicted.rows() != observations.counts.rows() || predicted.cols() != observations.counts.cols()) {
    throw DomainError("residual_grid: shape mismatch");
  }
  return observations.counts - predicted;
}

std::vector<double> synth_obs_times(const RunConfig& config) {
  return config.synth.obs_times.empty() ? minutes_to(config.grid.t_final) : config.synth.obs_times;
}

int cmd_solve(const SolveArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  const std::vector<double> bc_in = csv::read_series(args.bc_in);
  const std::vector<double> bc_out = csv::read_series(args.bc_out);
  if (bc_in.empty() || bc_out.empty()) throw DataError("boundary series must not be empty");
  const std::vector<double> ic = args.ic ? csv::read_series(*args.ic)
                                         : std::vector<double>(static_cast<std::size_t>(cfg.grid.n_cells), bc_in[0]);
  const std::vector<double> times = args.times.empty() ? minutes_to(cfg.grid.t_final) : args.times;
  const DensityField field = solve(ic, bc_in, bc_out, cfg.synth.fd, cfg.grid, times, cfg.solver);
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  write_density_field(args.out, field, cfg.grid, cfg.solver);
  return kExitOk;
}

int cmd_prior_sample(const PriorSampleArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  if (args.boundary != "inlet" && args.boundary != "outlet") throw ConfigError("--boundary must be inlet or outlet");
  if (args.count < 1) throw ConfigError("--count must be >= 1");
  const MuSource& source = args.boundary == "inlet" ? cfg.ou.inlet : cfg.ou.outlet;
  const std::vector<double> mu = build_mu(source, cfg.grid);
  const LogOuPrior prior(Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size())),
                         ou_params(cfg), cfg.ou.truncation);
  std::vector<std::vector<double>> rows(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) rows[i].push_back(static_cast<double>(i) * cfg.grid.bc_dt);
  std::vector<std::string> header{"t"};
  for (int s = 0; s < args.count; ++s) {
    Rng rng = make_stream(args.seed, {static_cast<std::uint64_t>(s)});
    const std::vector<double> d = prior.density(prior.sample_x(rng));
    for (std::size_t i = 0; i < d.size(); ++i) rows[i].push_back(d[i]);
    header.push_back("sample_" + std::to_string(s));
  }
  csv::write(args.out, header, rows);
  return kExitOk;
}

int cmd_fit_ou(const FitOuArgs& args) {
  const csv::Table table = csv::read(args.curves);
  std::vector<std::vector<double>> curves(table.header.size());
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) curves[c].push_back(csv::to_double(row[c]));
  }
  const std::vector<double> mu = fit_log_mean(curves, args.smoothing);
  std::vector<std::vector<double>> logs = curves;
  for (auto& c : logs) {
    for (double& v : c) v = std::log(v);
  }
  FitOuOptions opts;
  opts.iterations = args.iterations;
  opts.burn_in = args.burn_in;
  opts.dt = args.dt;
  Rng rng = make_stream(args.seed, {0});
  const FitOuResult fit = fit_ou(logs, mu, opts, rng);

  std::vector<double> betas, sigmas;
  std::vector<std::vector<double>> rows;
  for (const auto& [b, s] : fit.chain) {
    betas.push_back(b);
    sigmas.push_back(s);
    rows.push_back({b, s});
  }
  fs::path chain_path = args.out;
  chain_path.replace_extension(".chain.csv");
  csv::write(chain_path, {"beta", "sigma"}, rows);
  const Interval bi = credible_interval(betas, 0.9), si = credible_interval(sigmas, 0.9);
  write_json(args.out, {{"beta", fit.mean_beta},
                        {"sigma", fit.mean_sigma},
                        {"beta_90", {bi.lower, bi.upper}},
                        {"sigma_90", {si.lower, si.upper}},
                        {"acceptance_rate", fit.acceptance_rate},
                        {"curves", curves.size()},
                        {"dt", args.dt},
                        {"mu", mu}});
  std::cout << "beta = " << fit.mean_beta << ", sigma = " << fit.mean_sigma << ", acceptance "
            << fit.acceptance_rate << '\n';
  return kExitOk;
}

int cmd_fit_direct(const FitDirectArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  const csv::Table table = csv::read(args.data);
  std::vector<FlowDensityPoint> points;
  if (std::ranges::find(table.header, "position_km") != table.header.end()) {
    const DetectorData data = load_detector_csv(args.data, cfg.data.max_faulty_fraction);
    const auto est = estimate_densities(data.records);
    for (std::size_t i = 0; i < est.size(); ++i) {
      if (std::isfinite(est[i].from_speed)) {
        points.push_back({est[i].from_speed, static_cast<double>(data.records[i].count)});
      }
    }
  } else {
    const std::size_t cd = table.column("density"), cq = table.column("flow");
    for (const auto& r : table.rows) points.push_back({csv::to_double(r[cd]), csv::to_double(r[cq])});
  }
  if (points.empty()) throw DataError("no (density, flow) pairs in '" + args.data.string() + "'");
  if (args.init.size() != 4) throw ConfigError("--init needs four values (z, rho_j, u, omega)");

  const FdPriorBox box = cfg.fd_prior;
  const double floor = cfg.data.flow_floor;
  const LogDensityFn logpost = [&](const Eigen::VectorXd& p) {
    const std::array<double, 4> a{p(0), p(1), p(2), p(3)};
    if (!box.contains(a)) return -std::numeric_limits<double>::infinity();
    return direct_fit_loglik(DelCastilloParams::from_array(a), points, floor);
  };
  const Eigen::Vector4d init(args.init[0], args.init[1], args.init[2], args.init[3]);
  if (!std::isfinite(logpost(init))) throw ConfigError("--init lies outside the FD prior box");
  Rng rng = make_stream(args.seed, {0});
  const RwmResult res = rwm(logpost, init, direct_fit_proposal_covariance(), args.iterations, rng);

  fs::create_directories(args.out_dir);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < res.chain.rows(); ++i) {
    rows.push_back({res.chain(i, 0), res.chain(i, 1), res.chain(i, 2), res.chain(i, 3),
                    res.logpost[static_cast<std::size_t>(i)]});
  }
  csv::write(args.out_dir / "chain.csv", {"z", "rho_j", "u", "omega", "logpost"}, rows);
  nlohmann::json summary{{"acceptance_rate", res.acceptance_rate}, {"points", points.size()}};
  const Eigen::Index half = res.chain.rows() / 2;
  for (int p = 0; p < 4; ++p) {
    std::vector<double> v;
    for (Eigen::Index i = half; i < res.chain.rows(); ++i) v.push_back(res.chain(i, p));
    const Interval ci = credible_interval(v, 0.9);
    summary["parameters"][kFdNames[p]] = {{"mean", std::accumulate(v.begin(), v.end(), 0.0) / v.size()},
                                          {"ci90", {ci.lower, ci.upper}},
                                          {"ess", effective_sample_size(v)}};
  }
  write_json(args.out_dir / "summary.json", summary);
  std::cout << "acceptance rate " << res.acceptance_rate << '\n';
  return kExitOk;
}

int cmd_synthesize(const SynthesizeArgs& args) {
  RunConfig cfg = resolve_config(args.config);
  const std::size_t n = cfg.grid.bc_length();
  std::vector<double> bc_in, bc_out;
  try {
    bc_in = exp_of(piecewise_log_mean(cfg.synth.bc_in, cfg.grid.bc_dt, n));
    bc_out = exp_of(piecewise_log_mean(cfg.synth.bc_out, cfg.grid.bc_dt, n));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("synth boundary knots: ") + e.what());
  }
  const DetectorLayout layout{cfg.synth.positions, synth_obs_times(cfg)};
  TwinOptions opts;
  opts.noise = cfg.synth.noise;
  opts.burn_in = cfg.data.burn_in;
  opts.observation = observation_options(cfg);
  Rng rng = make_stream(cfg.synth.seed, {0});
  const Twin twin = synthesize_twin(cfg.synth.fd, bc_in, bc_out, cfg.grid, layout, rng, opts);
  write_twin(args.out_dir, args.stem, twin, cfg.grid);
  csv::write_series(args.out_dir / (args.stem + "_bc_in.csv"), "density", bc_in);
  csv::write_series(args.out_dir / (args.stem + "_bc_out.csv"), "density", bc_out);
  cfg.data.observations = (args.out_dir / (args.stem + ".csv")).string();
  write_text(args.out_dir / (args.stem + "_config.ini"), to_ini(cfg));
  std::cout << "wrote " << (args.out_dir / (args.stem + ".csv")).string() << '\n';
  return kExitOk;
}

int cmd_infer(const InferArgs& args) {
  RunConfig cfg = resolve_config(args.config);
  const fs::path obs_path = args.observations ? *args.observations : fs::path(cfg.data.observations);
  const InverseProblem problem = build_problem(cfg, load_observations(cfg, obs_path));
  fs::create_directories(args.out_dir);
  const fs::path checkpoint = args.out_dir / "checkpoint.json";

  FesPtConfig sampler_cfg = cfg.sampler;
  nlohmann::json schedule{{"tuned", false}};
  FesPtState state;
  bool have_state = false;
  if (args.resume && fs::exists(checkpoint)) {
    const nlohmann::json ck = read_json(checkpoint);
    if (resumable_view(ck.at("config")) != resumable_view(to_json(cfg))) {
      throw ConfigError("checkpoint in '" + args.out_dir.string() + "' was written with a different config");
    }
    sampler_cfg.betas = ck.at("betas").get<std::vector<double>>();
    schedule = ck.at("schedule");
    state = state_from_json(ck.at("state"));
    have_state = true;
    if (!args.quiet) std::clog << "resuming at iteration " << state.iteration << '\n';
  } else if (cfg.extras.tune_temperatures) {
    const TunedSchedule tuned = tune_temperatures(problem, cfg, args.quiet);
    sampler_cfg.betas = tuned.betas;
    schedule = {{"tuned", true}, {"fallback", tuned.fallback}, {"ratio", tuned.ratio},
                {"pilot_swap_rate", tuned.pilot_swap_rate}};
  }
  const FesPtSampler sampler(problem, sampler_cfg);
  if (!have_state) state = sampler.initialize();

  auto save_checkpoint = [&](const FesPtState& s) {
    write_json(checkpoint, {{"config", to_json(cfg)}, {"betas", sampler_cfg.betas}, {"schedule", schedule},
                            {"state", to_json(s)}});
  };

  g_interrupted = 0;
  const auto previous = std::signal(SIGINT, on_interrupt);
  bool stopped = false;
  const long report_every = std::max<long>(1, sampler_cfg.iterations / 20);
  sampler.run(state, [&](const FesPtState& s) {
    if (!args.quiet && s.iteration % report_every == 0) {
      std::clog << "iteration " << s.iteration << " / " << sampler_cfg.iterations << '\n';
    }
    const bool at_stop = args.stop_after >= 0 && s.iteration >= args.stop_after;
    if (g_interrupted || at_stop) {
      stopped = true;
      return false;
    }
    if (cfg.extras.checkpoint_every > 0 && s.iteration % cfg.extras.checkpoint_every == 0) save_checkpoint(s);
    return true;
  });
  std::signal(SIGINT, previous);
  save_checkpoint(state);

  if (stopped) {
    std::clog << "stopped at iteration " << state.iteration << "; continue with --resume\n";
    return g_interrupted ? kExitInterrupted : kExitOk;
  }

  std::vector<std::string> files = write_run_outputs(args.out_dir, state, sampler_cfg, problem);
  nlohmann::json stats = nlohmann::json::array();
  for (std::size_t k = 0; k < state.stats.size(); ++k) {
    const auto& s = state.stats[k];
    stats.push_back({{"beta", sampler_cfg.betas[k]},
                     {"stretch", {s.stretch.proposed, s.stretch.accepted}},
                     {"pcn_inlet", {s.pcn_inlet.proposed, s.pcn_inlet.accepted}},
                     {"pcn_outlet", {s.pcn_outlet.proposed, s.pcn_outlet.accepted}}});
  }
  files.push_back("checkpoint.json");
  write_json(args.out_dir / "manifest.json", {{"config", to_json(cfg)},
                                              {"observations", obs_path.string()},
                                              {"iterations", state.iteration},
                                              {"betas", sampler_cfg.betas},
                                              {"schedule", schedule},
                                              {"move_counts", state.move_counts},
                                              {"stats", stats},
                                              {"files", files}});
  if (!args.quiet) std::clog << "finished " << state.iteration << " iterations\n";
  return kExitOk;
}

int cmd_diagnose(const DiagnoseArgs& args) {
  const nlohmann::json manifest = read_json(args.run_dir / "manifest.json");
  const RunConfig cfg = config_from_json(manifest);
  const fs::path out = args.out_dir ? *args.out_dir : args.run_dir / "diagnostics";
  fs::create_directories(out);

  const ChainTable chains = read_cold_chains(args.run_dir, cfg.sampler.walkers);
  const double burn = static_cast<double>(manifest.at("iterations").get<long>()) * cfg.sampler.burn_fraction;
  auto kept = [&](const std::vector<double>& row) { return row[0] > burn; };
  bool any_kept = false;
  for (const auto& w : chains.walkers) any_kept = any_kept || std::ranges::any_of(w, kept);
  auto use = [&](const std::vector<double>& row) { return !any_kept || kept(row); };

  // Traces and per-parameter summaries of the cold chain.
  nlohmann::json report;
  std::vector<std::vector<double>> summary_rows;
  std::array<double, 4> fd_mean{};
  for (int p = 0; p < 4; ++p) {
    std::vector<std::vector<double>> trace;
    const std::size_t len = chains.walkers.front().size();
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> row{chains.walkers.front()[i][0]};
      for (const auto& w : chains.walkers) row.push_back(i < w.size() ? w[i][p + 1] : std::nan(""));
      trace.push_back(std::move(row));
    }
    std::vector<std::string> header{"iteration"};
    for (std::size_t l = 0; l < chains.walkers.size(); ++l) header.push_back("w" + std::to_string(l));
    csv::write(out / (std::string("trace_") + kFdNames[p] + ".csv"), header, trace);

    std::vector<double> pooled;
    double ess = 0.0;
    for (const auto& w : chains.walkers) {
      std::vector<double> series;
      for (const auto& row : w) {
        if (use(row)) series.push_back(row[p + 1]);
      }
      if (!series.empty()) ess += effective_sample_size(series);
      pooled.insert(pooled.end(), series.begin(), series.end());
    }
    const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
    double var = 0.0;
    for (double v : pooled) var += (v - mean) * (v - mean);
    var /= std::max<double>(1.0, static_cast<double>(pooled.size()) - 1.0);
    const Interval ci = credible_interval(pooled, 0.9);
    fd_mean[p] = mean;
    summary_rows.push_back({static_cast<double>(p), mean, std::sqrt(var), ci.lower, quantile(pooled, 0.5), ci.upper, ess});
    report["parameters"][kFdNames[p]] = {{"mean", mean}, {"sd", std::sqrt(var)}, {"ci90", {ci.lower, ci.upper}},
                                         {"ess", ess}};
  }
  csv::write(out / "parameters.csv", {"index", "mean", "sd", "q05", "q50", "q95", "ess"}, summary_rows);
  report["stats"] = manifest.at("stats");

  std::vector<std::array<double, 4>> draws;
  std::vector<std::vector<double>> scatter;
  for (std::size_t l = 0; l < chains.walkers.size(); ++l) {
    for (const auto& row : chains.walkers[l]) {
      if (!use(row)) continue;
      draws.push_back({row[1], row[2], row[3], row[4]});
      scatter.push_back({row[0], static_cast<double>(l), row[1], row[2], row[3], row[4], row[5]});
    }
  }
  csv::write(out / "fd_scatter.csv", {"iteration", "walker", "z", "rho_j", "u", "omega", "loglik"}, scatter);

  // FD curves at evenly spaced posterior draws.
  const std::size_t n_curves = std::min<std::size_t>(static_cast<std::size_t>(std::max(args.fd_curves, 1)), draws.size());
  double rho_max = 0.0;
  for (const auto& d : draws) rho_max = std::max(rho_max, d[1]);
  std::vector<std::vector<double>> curves;
  std::vector<std::string> curve_header{"density"};
  for (std::size_t c = 0; c < n_curves; ++c) curve_header.push_back("draw_" + std::to_string(c));
  for (int i = 0; i <= 200; ++i) {
    const double rho = rho_max * i / 200.0;
    std::vector<double> row{rho};
    for (std::size_t c = 0; c < n_curves; ++c) {
      const auto fd = DelCastilloParams::from_array(draws[c * draws.size() / n_curves]);
      row.push_back(rho <= fd.rho_j ? delcastillo_flow(rho, fd) : 0.0);
    }
    curves.push_back(std::move(row));
  }
  csv::write(out / "fd_curves.csv", curve_header, curves);

  if (args.flow) {
    std::vector<std::vector<double>> pairs;
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const auto fd = DelCastilloParams::from_array(draws[i]);
      if (*args.flow > capacity(fd)) {
        pairs.push_back({static_cast<double>(i), std::nan(""), std::nan("")});
        continue;
      }
      const DensityPair dp = density_pair_for_flow(*args.flow, fd);
      pairs.push_back({static_cast<double>(i), dp.free_flow, dp.congested});
    }
    csv::write(out / "density_pairs.csv", {"draw", "free_flow", "congested"}, pairs);
  }

  // Posterior-mean (or true) field and count residuals.
  const ObservationSet obs = load_observations(cfg, manifest.at("observations").get<std::string>());
  DelCastilloParams fd = DelCastilloParams::from_array(fd_mean);
  std::vector<double> bc_in, bc_out;
  if (args.truth) {
    const nlohmann::json truth = read_json(*args.truth);
    const auto& f = truth.at("fd");
    fd = {f.at("z").get<double>(), f.at("rho_j").get<double>(), f.at("u").get<double>(), f.at("omega").get<double>()};
    bc_in = truth.at("bc_in").get<std::vector<double>>();
    bc_out = truth.at("bc_out").get<std::vector<double>>();
  } else {
    const csv::Table means = csv::read(args.run_dir / "bc_mean.csv");
    const std::size_t ci = means.column("inlet"), co = means.column("outlet");
    for (const auto& r : means.rows) {
      bc_in.push_back(csv::to_double(r[ci]));
      bc_out.push_back(csv::to_double(r[co]));
    }
  }
  const ObservationOptions opts = observation_options(cfg);
  const Eigen::MatrixXd predicted = observation_operator(fd, bc_in, bc_out, cfg.grid, obs, opts);
  const Eigen::MatrixXd resid = residual_grid(obs, predicted);
  std::vector<std::vector<double>> rrows;
  double sq = 0.0;
  long n_used = 0;
  for (Eigen::Index d = 0; d < resid.rows(); ++d) {
    for (Eigen::Index k = 0; k < resid.cols(); ++k) {
      const bool used = k >= obs.burn_in;
      rrows.push_back({obs.detector_positions[static_cast<std::size_t>(d)], obs.obs_times[static_cast<std::size_t>(k)],
                       obs.counts(d, k), predicted(d, k), resid(d, k), used ? 1.0 : 0.0});
      if (used) {
        sq += resid(d, k) * resid(d, k);
        ++n_used;
      }
    }
  }
  csv::write(out / "residuals.csv", {"position_km", "minute", "observed", "predicted", "residual", "in_likelihood"},
             rrows);
  report["residual_rms"] = n_used ? std::sqrt(sq / static_cast<double>(n_used)) : 0.0;
  report["evaluated_at"] = args.truth ? "truth" : "posterior_mean";

  const std::vector<double> ic(static_cast<std::size_t>(cfg.grid.n_cells), bc_in.front());
  const DensityField field = solve(ic, bc_in, bc_out, fd, cfg.grid, minutes_to(cfg.grid.t_final), cfg.solver);
  write_density_field(out / "field.csv", field, cfg.grid, cfg.solver);
  write_json(out / "report.json", report);
  std::cout << "diagnostics written to " << out.string() << '\n';
  return kExitOk;
}

}  // namespace lwr
