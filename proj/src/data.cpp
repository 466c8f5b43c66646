#include "lwr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "lwr/csv.hpp"
#include "lwr/errors.hpp"

namespace lwr {

namespace {

constexpr std::array<double, 4> kTypeLength{4.0, 6.0, 9.0, 16.0};
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string where(const DetectorRecord& r) {
  std::ostringstream s;
  s << "detector " << r.position_km << " km, minute " << r.minute;
  return s.str();
}

}  // namespace

double density_from_speed(double count_per_min, double speed_kmh) {
  if (!(speed_kmh > 0.0)) throw DomainError("density_from_speed: speed must be positive");
  if (!(count_per_min >= 0.0)) throw DomainError("density_from_speed: negative count");
  return 60.0 * count_per_min / speed_kmh;
}

double avg_vehicle_length(const std::array<long, 4>& counts_by_type, long total) {
  long sum = 0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (counts_by_type[i] < 0) throw DomainError("avg_vehicle_length: negative type count");
    sum += counts_by_type[i];
    weighted += kTypeLength[i] * static_cast<double>(counts_by_type[i]);
  }
  if (total <= 0) throw DomainError("avg_vehicle_length: no vehicles");
  if (sum != total) throw DomainError("avg_vehicle_length: type counts do not sum to total");
  return weighted / static_cast<double>(total);
}

double density_from_occupancy(double occupancy, double length_m) {
  if (!(length_m > 0.0)) throw DomainError("density_from_occupancy: vehicle length must be positive");
  if (!(occupancy >= 0.0 && occupancy <= 1.0)) throw DomainError("density_from_occupancy: occupancy outside [0, 1]");
  return 1000.0 * occupancy / length_m;
}

std::string record_fault(const DetectorRecord& r) {
  if (!std::isfinite(r.position_km) || !std::isfinite(r.minute)) return "non-finite position or time";
  if (r.count < 0) return "negative count";
  if (!(r.occupancy >= 0.0 && r.occupancy <= 1.0)) return "occupancy outside [0, 1]";
  if (!(r.avg_speed_kmh >= 0.0)) return "negative or missing speed";
  if (r.count > 0 && !(r.avg_speed_kmh > 0.0)) return "vehicles counted with zero speed";
  long sum = 0;
  for (long q : r.counts_by_type) {
    if (q < 0) return "negative type count";
    sum += q;
  }
  if (sum != r.count) return "type counts do not sum to count";
  return {};
}

DetectorData load_detector_csv(const std::filesystem::path& path, double max_faulty_fraction) {
  const csv::Table table = csv::read(path);
  const std::size_t c_pos = table.column("position_km"), c_min = table.column("minute"),
                    c_count = table.column("count"), c_occ = table.column("occupancy"),
                    c_speed = table.column("avg_speed_kmh");
  const std::array<std::size_t, 4> c_q{table.column("q1"), table.column("q2"), table.column("q3"),
                                       table.column("q4")};

  std::vector<DetectorRecord> all;
  all.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    DetectorRecord r;
    r.position_km = csv::to_double(row[c_pos]);
    r.minute = csv::to_double(row[c_min]);
    r.count = csv::to_long(row[c_count]);
    r.occupancy = csv::to_double(row[c_occ]);
    if (r.occupancy > 1.0) r.occupancy /= 100.0;
    r.avg_speed_kmh = csv::to_double(row[c_speed]);
    for (std::size_t i = 0; i < 4; ++i) r.counts_by_type[i] = csv::to_long(row[c_q[i]]);
    all.push_back(r);
  }

  DetectorData out;
  std::map<double, std::pair<long, long>> tally;  // position -> (faulty, total)
  std::vector<bool> ok(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::string fault = record_fault(all[i]);
    ok[i] = fault.empty();
    auto& [faulty, total] = tally[all[i].position_km];
    ++total;
    if (!ok[i]) {
      ++faulty;
      out.log.push_back("excluded " + where(all[i]) + ": " + fault);
    }
  }
  for (const auto& [pos, t] : tally) {
    const double share = static_cast<double>(t.first) / static_cast<double>(t.second);
    if (share > max_faulty_fraction) {
      out.dropped_detectors.push_back(pos);
      std::ostringstream s;
      s << "dropped detector " << pos << " km: " << t.first << " of " << t.second << " minutes faulty";
      out.log.push_back(s.str());
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (ok[i] && !std::ranges::binary_search(out.dropped_detectors, all[i].position_km)) {
      out.records.push_back(all[i]);
    }
  }
  return out;
}

void write_detector_csv(const std::filesystem::path& path, const std::vector<DetectorRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "position_km,minute,count,occupancy,avg_speed_kmh,q1,q2,q3,q4\n";
  for (const auto& r : records) {
    out << csv::format(r.position_km) << ',' << csv::format(r.minute) << ',' << r.count << ','
        << csv::format(r.occupancy) << ',' << csv::format(r.avg_speed_kmh);
    for (long q : r.counts_by_type) out << ',' << q;
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

ObservationSet to_observations(const std::vector<DetectorRecord>& records, int burn_in) {
  ObservationSet obs;
  obs.burn_in = burn_in;
  for (const auto& r : records) {
    obs.detector_positions.push_back(r.position_km);
    obs.obs_times.push_back(r.minute);
  }
  auto unique_sorted = [](std::vector<double>& v) {
    std::ranges::sort(v);
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  unique_sorted(obs.detector_positions);
  unique_sorted(obs.obs_times);
  const auto n_det = static_cast<Eigen::Index>(obs.detector_positions.size());
  const auto n_t = static_cast<Eigen::Index>(obs.obs_times.size());
  obs.counts = Eigen::MatrixXd::Constant(n_det, n_t, -1.0);
  auto index_of = [](const std::vector<double>& v, double x) {
    return static_cast<Eigen::Index>(std::ranges::lower_bound(v, x) - v.begin());
  };
  for (const auto& r : records) {
    double& c = obs.counts(index_of(obs.detector_positions, r.position_km), index_of(obs.obs_times, r.minute));
    if (c >= 0.0) throw DataError("duplicate record at " + where(r));
    c = static_cast<double>(r.count);
  }
  for (Eigen::Index d = 0; d < n_det; ++d) {
    for (Eigen::Index k = 0; k < n_t; ++k) {
      if (obs.counts(d, k) < 0.0) {
        std::ostringstream s;
        s << "missing record for detector " << obs.detector_positions[static_cast<std::size_t>(d)] << " km, minute "
          << obs.obs_times[static_cast<std::size_t>(k)];
        throw DataError(s.str());
      }
    }
  }
  return obs;
}

ObservationSet load_observation_csv(const std::filesystem::path& path, int burn_in) {
  const csv::Table table = csv::read(path);
  const std::size_t c_pos = table.column("detector_km"), c_min = table.column("minute"),
                    c_count = table.column("count");
  std::vector<DetectorRecord> records;
  std::vector<double> counts;
  for (const auto& row : table.rows) {
    DetectorRecord r;
    r.position_km = csv::to_double(row[c_pos]);
    r.minute = csv::to_double(row[c_min]);
    const double c = csv::to_double(row[c_count]);
    if (!(c >= 0.0) || !std::isfinite(c)) throw DataError("invalid count at " + where(r) + " in " + path.string());
    records.push_back(r);
    counts.push_back(c);
  }
  ObservationSet obs = to_observations(records, burn_in);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto d = std::ranges::lower_bound(obs.detector_positions, records[i].position_km) - obs.detector_positions.begin();
    const auto k = std::ranges::lower_bound(obs.obs_times, records[i].minute) - obs.obs_times.begin();
    obs.counts(d, k) = counts[i];
  }
  return obs;
}

void write_observation_csv(const std::filesystem::path& path, const ObservationSet& observations) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index d = 0; d < observations.counts.rows(); ++d) {
    for (Eigen::Index k = 0; k < observations.counts.cols(); ++k) {
      rows.push_back({observations.detector_positions[static_cast<std::size_t>(d)],
                      observations.obs_times[static_cast<std::size_t>(k)], observations.counts(d, k)});
    }
  }
  csv::write(path, {"detector_km", "minute", "count"}, rows);
}

std::vector<DensityEstimate> estimate_densities(const std::vector<DetectorRecord>& records) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
    if (records[a].position_km != records[b].position_km) return records[a].position_km < records[b].position_km;
    return records[a].minute < records[b].minute;
  });

  std::vector<DensityEstimate> out(records.size());
  double last_length = kNaN;
  double last_position = kNaN;
  for (std::size_t i : order) {
    const DetectorRecord& r = records[i];
    if (r.position_km != last_position) {
      last_length = kNaN;
      last_position = r.position_km;
    }
    DensityEstimate e{r.position_km, r.minute, kNaN, kNaN};
    if (r.count == 0) {
      e.from_speed = 0.0;
    } else if (r.avg_speed_kmh > 0.0) {
      e.from_speed = density_from_speed(static_cast<double>(r.count), r.avg_speed_kmh);
    }
    if (r.count > 0) last_length = avg_vehicle_length(r.counts_by_type, r.count);
    if (std::isfinite(last_length)) e.from_occupancy = density_from_occupancy(r.occupancy, last_length);
    out[i] = e;
  }
  return out;
}

DetectorLayout default_layout() {
  DetectorLayout layout;
  layout.positions = {0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 4.5, 5.0};
  for (int t = 0; t <= 48; ++t) layout.obs_times.push_back(static_cast<double>(t));
  return layout;
}

Twin synthesize_twin(const DelCastilloParams& fd, std::vector<double> bc_in, std::vector<double> bc_out,
                     const Grid& grid, const DetectorLayout& layout, Rng& rng, const TwinOptions& options) {
  Twin twin;
  twin.fd = fd;
  twin.bc_in = std::move(bc_in);
  twin.bc_out = std::move(bc_out);
  ObservationSet& obs = twin.observations;
  obs.detector_positions = layout.positions;
  obs.obs_times = layout.obs_times;
  obs.burn_in = options.burn_in >= 0 ? options.burn_in : default_burn_in(grid.road_length);
  obs.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout.positions.size()),
                                     static_cast<Eigen::Index>(layout.obs_times.size()));
  try {
    fd.validate();
    obs.validate(grid);
    twin.expected = observation_operator(fd, twin.bc_in, twin.bc_out, grid, obs, options.observation);
    const std::vector<double> ic(static_cast<std::size_t>(grid.n_cells), twin.bc_in.front());
    const DensityField field = solve(ic, twin.bc_in, twin.bc_out, fd, grid, obs.obs_times, options.observation.solver);
    twin.true_density.resize(obs.counts.rows(), obs.counts.cols());
    for (Eigen::Index d = 0; d < obs.counts.rows(); ++d) {
      const int cell = detector_cell(obs.detector_positions[static_cast<std::size_t>(d)], grid);
      for (Eigen::Index k = 0; k < obs.counts.cols(); ++k) {
        twin.true_density(d, k) = field.at(cell, static_cast<std::size_t>(k));
      }
    }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("synthetic twin: invalid truth: ") + e.what());
  } catch (const NumericalError& e) {
    throw ConfigError(std::string("synthetic twin: forward solve failed at truth: ") + e.what());
  }

  for (Eigen::Index k = 0; k < obs.counts.cols(); ++k) {
    for (Eigen::Index d = 0; d < obs.counts.rows(); ++d) {
      const double q = std::max(twin.expected(d, k), 0.0);
      switch (options.noise) {
        case CountNoise::Poisson:
          obs.counts(d, k) = q > 0.0 ? static_cast<double>(std::poisson_distribution<long>(q)(rng)) : 0.0;
          break;
        case CountNoise::Rounded:
          obs.counts(d, k) = std::round(q);
          break;
        case CountNoise::Expected:
          obs.counts(d, k) = q;
          break;
      }
    }
  }
  return twin;
}

std::vector<DetectorRecord> twin_records(const Twin& twin) {
  const ObservationSet& obs = twin.observations;
  const double free_speed_kmh = 60.0 * twin.fd.z * twin.fd.u / twin.fd.rho_j;
  std::vector<DetectorRecord> records;
  for (Eigen::Index d = 0; d < obs.counts.rows(); ++d) {
    for (Eigen::Index k = 0; k < obs.counts.cols(); ++k) {
      DetectorRecord r;
      r.position_km = obs.detector_positions[static_cast<std::size_t>(d)];
      r.minute = obs.obs_times[static_cast<std::size_t>(k)];
      r.count = std::lround(obs.counts(d, k));
      r.counts_by_type = {r.count, 0, 0, 0};
      const double rho = twin.true_density(d, k);
      r.occupancy = std::clamp(rho * kTypeLength[0] / 1000.0, 0.0, 1.0);
      r.avg_speed_kmh = rho > 0.0 ? 60.0 * twin.expected(d, k) / rho : free_speed_kmh;
      records.push_back(r);
    }
  }
  return records;
}

nlohmann::json twin_truth_json(const Twin& twin, const Grid& grid) {
  const ObservationSet& obs = twin.observations;
  nlohmann::json j;
  j["fd"] = {{"z", twin.fd.z}, {"rho_j", twin.fd.rho_j}, {"u", twin.fd.u}, {"omega", twin.fd.omega}};
  j["grid"] = {{"road_length", grid.road_length}, {"n_cells", grid.n_cells}, {"t_final", grid.t_final},
               {"bc_dt", grid.bc_dt}, {"cfl_number", grid.cfl_number}};
  j["detector_positions"] = obs.detector_positions;
  j["obs_times"] = obs.obs_times;
  j["burn_in"] = obs.burn_in;
  j["bc_in"] = twin.bc_in;
  j["bc_out"] = twin.bc_out;
  auto rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
    }
    return out;
  };
  j["expected_flow"] = rows(twin.expected);
  return j;
}

void write_twin(const std::filesystem::path& dir, const std::string& stem, const Twin& twin, const Grid& grid) {
  std::filesystem::create_directories(dir);
  write_detector_csv(dir / (stem + ".csv"), twin_records(twin));
  write_observation_csv(dir / (stem + "_obs.csv"), twin.observations);
  std::ofstream out(dir / (stem + "_truth.json"));
  if (!out) throw DataError("cannot write " + (dir / (stem + "_truth.json")).string());
  out << twin_truth_json(twin, grid).dump(2) << '\n';
}

}  // namespace lwr
