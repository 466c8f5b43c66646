#pragma once

// Loop-detector records, density estimators and synthetic-twin generation.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lwr/fd.hpp"
#include "lwr/model.hpp"
#include "lwr/rng.hpp"
#include "lwr/solver.hpp"

namespace lwr {

/// One detector-minute, counts summed over lanes.
struct DetectorRecord {
  double position_km = 0.0;
  double minute = 0.0;
  long count = 0;
  double occupancy = 0.0;  ///< fraction in [0, 1]
  double avg_speed_kmh = 0.0;
  std::array<long, 4> counts_by_type{0, 0, 0, 0};
};

/// 60 count / speed (veh/km). Throws DomainError for speed <= 0.
double density_from_speed(double count_per_min, double speed_kmh);

/// Mean vehicle length in metres from counts of types 1-4 (4, 6, 9, 16 m).
/// Throws DomainError when total is not positive or does not match.
double avg_vehicle_length(const std::array<long, 4>& counts_by_type, long total);

/// 1000 occ / L (veh/km). Throws DomainError for L <= 0 or occ outside [0, 1].
double density_from_occupancy(double occupancy, double length_m);

/// Empty string when the record is usable, otherwise the reason it is not.
std::string record_fault(const DetectorRecord& r);

struct DetectorData {
  std::vector<DetectorRecord> records;     ///< valid records of retained detectors
  std::vector<double> dropped_detectors;   ///< km
  std::vector<std::string> log;            ///< one line per excluded record or dropped detector
};

/// Reads the detector CSV (position_km, minute, count, occupancy,
/// avg_speed_kmh, q1..q4). Occupancy above 1 is read as a percentage.
/// Faulty records are excluded; detectors whose faulty share exceeds
/// max_faulty_fraction are dropped. Throws DataError on malformed files.
DetectorData load_detector_csv(const std::filesystem::path& path, double max_faulty_fraction = 0.2);

void write_detector_csv(const std::filesystem::path& path, const std::vector<DetectorRecord>& records);

/// Counts matrix over the sorted distinct positions and minutes. Throws
/// DataError if any detector-minute is missing.
ObservationSet to_observations(const std::vector<DetectorRecord>& records, int burn_in);

/// Long-format observation CSV (detector_km, minute, count). Counts are read
/// as reals so noise-free twins keep full precision.
ObservationSet load_observation_csv(const std::filesystem::path& path, int burn_in);
void write_observation_csv(const std::filesystem::path& path, const ObservationSet& observations);

struct DensityEstimate {
  double position_km;
  double minute;
  double from_speed;      ///< NaN when unavailable
  double from_occupancy;  ///< NaN when unavailable
};

/// Both density estimators per record. A minute with no vehicles reuses the
/// detector's previous vehicle length.
std::vector<DensityEstimate> estimate_densities(const std::vector<DetectorRecord>& records);

struct DetectorLayout {
  std::vector<double> positions;  ///< km
  std::vector<double> obs_times;  ///< min
};

/// Eight detectors on a 5 km road observed at minutes 0..48.
DetectorLayout default_layout();

enum class CountNoise {
  Poisson,  ///< counts ~ Poisson(qhat)
  Rounded,  ///< counts = round(qhat), zero variance
  Expected, ///< counts = qhat, not integer; closed-loop checks only
};

struct TwinOptions {
  CountNoise noise = CountNoise::Poisson;
  int burn_in = -1;  ///< < 0: default_burn_in(road length)
  ObservationOptions observation{};
};

struct Twin {
  ObservationSet observations;
  DelCastilloParams fd;
  std::vector<double> bc_in;
  std::vector<double> bc_out;
  Eigen::MatrixXd expected;       ///< qhat, detectors x times
  Eigen::MatrixXd true_density;   ///< density at detector cells, detectors x times
};

/// Runs the observation operator at the truth and draws counts. Throws
/// ConfigError if the truth is invalid or the forward solve fails.
Twin synthesize_twin(const DelCastilloParams& fd, std::vector<double> bc_in, std::vector<double> bc_out,
                     const Grid& grid, const DetectorLayout& layout, Rng& rng, const TwinOptions& options = {});

/// Detector records for the twin. Every vehicle is type 1; occupancy and
/// speed are consistent with the true density at the detector.
std::vector<DetectorRecord> twin_records(const Twin& twin);

nlohmann::json twin_truth_json(const Twin& twin, const Grid& grid);

/// Writes <stem>.csv (detector format), <stem>_obs.csv (observation format)
/// and <stem>_truth.json.
void write_twin(const std::filesystem::path& dir, const std::string& stem, const Twin& twin, const Grid& grid);

}  // namespace lwr
