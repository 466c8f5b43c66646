#pragma once

// Subcommands behind the lwr executable. Each returns a process exit code:
// 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lwr/config.hpp"
#include "lwr/data.hpp"
#include "lwr/fes_pt.hpp"
#include "lwr/model.hpp"

namespace lwr {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4, kExitInterrupted = 130 };

/// Runs fn, mapping library exceptions to exit codes and printing the
/// message to stderr.
int run_guarded(const std::function<int()>& fn);

using OptPath = std::optional<std::filesystem::path>;

struct SolveArgs {
  OptPath config;
  std::filesystem::path bc_in;
  std::filesystem::path bc_out;
  OptPath ic;                       ///< default: constant bc_in[0]
  std::vector<double> times;        ///< default: whole minutes to t_final
  std::filesystem::path out = "field.csv";
};
int cmd_solve(const SolveArgs& args);

struct PriorSampleArgs {
  OptPath config;
  std::string boundary = "inlet";
  int count = 10;
  std::uint64_t seed = 1;
  std::filesystem::path out = "prior_samples.csv";
};
int cmd_prior_sample(const PriorSampleArgs& args);

struct FitOuArgs {
  std::filesystem::path curves;     ///< CSV, one density curve per column
  double dt = 1.0;
  int smoothing = 5;
  int iterations = 20000;
  int burn_in = 5000;
  std::uint64_t seed = 1;
  std::filesystem::path out = "ou_fit.json";
};
int cmd_fit_ou(const FitOuArgs& args);

struct FitDirectArgs {
  OptPath config;
  std::filesystem::path data;       ///< density,flow CSV or detector CSV
  int iterations = 20000;
  std::uint64_t seed = 1;
  std::vector<double> init{250.0, 550.0, 5.5, 1.0};
  std::filesystem::path out_dir = "fit_direct";
};
int cmd_fit_direct(const FitDirectArgs& args);

/// Proposal covariance of the direct fit over (z, rho_j, u, omega).
Eigen::Matrix4d direct_fit_proposal_covariance();

struct SynthesizeArgs {
  OptPath config;
  std::filesystem::path out_dir = "twin";
  std::string stem = "twin";
};
int cmd_synthesize(const SynthesizeArgs& args);

struct InferArgs {
  OptPath config;
  OptPath observations;             ///< overrides data.observations
  std::filesystem::path out_dir = "run";
  bool resume = false;
  long stop_after = -1;             ///< stop (with a checkpoint) at this iteration
  bool quiet = false;
};
int cmd_infer(const InferArgs& args);

struct DiagnoseArgs {
  std::filesystem::path run_dir = "run";
  OptPath out_dir;                  ///< default: <run_dir>/diagnostics
  std::optional<double> flow;       ///< veh/min for the density-pair table
  OptPath truth;                    ///< twin truth JSON: residuals at the truth
  int fd_curves = 50;
};
int cmd_diagnose(const DiagnoseArgs& args);

/// Observations named by the config, with the faulty-record policy applied.
ObservationSet load_observations(const RunConfig& config, const std::filesystem::path& path);

/// Priors and likelihood assembled from a config.
InverseProblem build_problem(const RunConfig& config, ObservationSet observations);

/// Observed minus predicted counts.
Eigen::MatrixXd residual_grid(const ObservationSet& observations, const Eigen::MatrixXd& predicted);

/// Observation times for the twin: the config's list, else whole minutes.
std::vector<double> synth_obs_times(const RunConfig& config);

}  // namespace lwr
