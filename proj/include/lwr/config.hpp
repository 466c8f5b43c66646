#pragma once

// Run configuration: INI sections mirrored one-to-one in JSON manifests.
// Every default reproduces the reference setup.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lwr/data.hpp"
#include "lwr/fes_pt.hpp"
#include "lwr/model.hpp"
#include "lwr/solver.hpp"

namespace lwr {

/// Environment variable naming the config file used when none is given.
inline constexpr const char* kConfigEnvVar = "LWR_CONFIG";

/// Either (time, density) knots interpolated in log space or a CSV of
/// historical density curves (one column per day) averaged in log space.
struct MuSource {
  std::vector<std::pair<double, double>> knots{{0.0, 60.0}, {48.0, 60.0}};
  std::string curves;       ///< path; takes precedence over knots
  double curves_dt = 1.0;   ///< min between rows of the curves file
  int smoothing = 5;        ///< moving-average window for curves
};

struct OuConfig {
  double beta = 0.22;
  double sigma = 0.256;
  int truncation = 4;
  MuSource inlet;
  MuSource outlet;
};

struct SamplerExtras {
  long checkpoint_every = 1000;  ///< iterations between checkpoints, 0 disables
  bool tune_temperatures = false;
  long pilot_iterations = 200;
};

struct DataConfig {
  std::string observations;  ///< detector CSV
  int burn_in = -1;          ///< < 0: derived from road length
  FlowSampling sampling = FlowSampling::Instantaneous;
  double window = 1.0;
  double flow_floor = 1e-3;
  double max_faulty_fraction = 0.2;
};

struct SynthConfig {
  DelCastilloParams fd{250.0, 500.0, 3.1, 0.2};
  std::vector<std::pair<double, double>> bc_in{{0.0, 60.0}, {48.0, 60.0}};
  std::vector<std::pair<double, double>> bc_out{{0.0, 60.0}, {48.0, 60.0}};
  std::vector<double> positions{0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 4.5, 5.0};
  std::vector<double> obs_times;  ///< empty: whole minutes 0..t_final
  CountNoise noise = CountNoise::Poisson;
  std::uint64_t seed = 7;
};

struct RunConfig {
  Grid grid;
  SolverOptions solver;
  FdPriorBox fd_prior;
  OuConfig ou;
  FesPtConfig sampler;
  SamplerExtras extras;
  DataConfig data;
  SynthConfig synth;
  std::string output_dir = "out";

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Parses INI, or JSON when the file ends in .json. A JSON manifest with a
/// "config" member is accepted. Unknown sections or keys are errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_ini(const std::string& text);
RunConfig config_from_json(const nlohmann::json& j);

std::string to_ini(const RunConfig& config);
/// Sections of string values, exactly as they would appear in INI.
nlohmann::json to_json(const RunConfig& config);

/// Config from the explicit path, else $LWR_CONFIG, else defaults.
RunConfig resolve_config(const std::optional<std::filesystem::path>& path);

std::vector<std::pair<double, double>> parse_knots(const std::string& text);
std::string format_knots(const std::vector<std::pair<double, double>>& knots);

/// Log-mean curve on the boundary grid, relative paths resolved against base.
std::vector<double> build_mu(const MuSource& source, const Grid& grid, const std::filesystem::path& base = {});

}  // namespace lwr
