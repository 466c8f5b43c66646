#include "lwr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lwr/csv.hpp"
#include "lwr/errors.hpp"
#include "lwr/prior.hpp"

namespace lwr {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_num(const std::string& s, const std::string& key) {
  try {
    return csv::to_double(trim(s));
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

long to_int(const std::string& s, const std::string& key) {
  try {
    return csv::to_long(trim(s));
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
}

bool to_bool(const std::string& s, const std::string& key) {
  const std::string v = trim(s);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(to_num(item, key));
  return out;
}

std::string fmt(double v) { return csv::format(v); }

std::string fmt_list(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

template <class Enum>
std::string enum_name(Enum v, const std::vector<std::pair<Enum, std::string>>& names) {
  for (const auto& [e, n] : names) {
    if (e == v) return n;
  }
  return {};
}

template <class Enum>
Enum enum_value(const std::string& s, const std::vector<std::pair<Enum, std::string>>& names, const std::string& key) {
  const std::string v = trim(s);
  std::string options;
  for (const auto& [e, n] : names) {
    if (n == v) return e;
    options += (options.empty() ? "" : ", ") + n;
  }
  throw ConfigError(key + ": unknown value '" + s + "' (expected one of " + options + ")");
}

const std::vector<std::pair<Scheme, std::string>> kSchemes{{Scheme::Godunov, "godunov"},
                                                            {Scheme::MinmodCorrected, "minmod"}};
const std::vector<std::pair<EnsembleSplit, std::string>> kSplits{{EnsembleSplit::Sequential, "sequential"},
                                                                  {EnsembleSplit::Halves, "halves"}};
const std::vector<std::pair<FlowSampling, std::string>> kSampling{{FlowSampling::Instantaneous, "instantaneous"},
                                                                   {FlowSampling::WindowAverage, "window"}};
const std::vector<std::pair<CountNoise, std::string>> kNoise{{CountNoise::Poisson, "poisson"},
                                                              {CountNoise::Rounded, "rounded"},
                                                              {CountNoise::Expected, "expected"}};

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define LWR_NUM(sec, name, expr)                                                           \
  Field {                                                                                   \
    sec, name, [](const RunConfig& c) { return fmt(c.expr); },                             \
        [](RunConfig& c, const std::string& v) { c.expr = to_num(v, sec "." name); }       \
  }
#define LWR_INT(sec, name, expr)                                                                          \
  Field {                                                                                                  \
    sec, name, [](const RunConfig& c) { return std::to_string(c.expr); },                                 \
        [](RunConfig& c, const std::string& v) {                                                          \
          c.expr = static_cast<std::decay_t<decltype(c.expr)>>(to_int(v, sec "." name));                  \
        }                                                                                                  \
  }
#define LWR_LIST(sec, name, expr)                                                                                 \
  Field {                                                                                                          \
    sec, name, [](const RunConfig& c) { return fmt_list(c.expr); },                                               \
        [](RunConfig& c, const std::string& v) { c.expr = to_list(v, sec "." name); }                             \
  }
#define LWR_STR(sec, name, expr)                                                                                \
  Field {                                                                                                        \
    sec, name, [](const RunConfig& c) { return c.expr; }, [](RunConfig& c, const std::string& v) { c.expr = trim(v); } \
  }
#define LWR_ENUM(sec, name, expr, table)                                                                       \
  Field {                                                                                                       \
    sec, name, [](const RunConfig& c) { return enum_name(c.expr, table); },                                    \
        [](RunConfig& c, const std::string& v) { c.expr = enum_value(v, table, sec "." name); }                \
  }
#define LWR_KNOTS(sec, name, expr)                                                                      \
  Field {                                                                                                \
    sec, name, [](const RunConfig& c) { return format_knots(c.expr); },                                 \
        [](RunConfig& c, const std::string& v) { c.expr = parse_knots(v); }                             \
  }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields{
      LWR_NUM("grid", "road_length", grid.road_length),
      LWR_INT("grid", "n_cells", grid.n_cells),
      LWR_NUM("grid", "t_final", grid.t_final),
      LWR_NUM("grid", "bc_dt", grid.bc_dt),
      LWR_NUM("grid", "cfl_number", grid.cfl_number),
      LWR_ENUM("grid", "scheme", solver.scheme, kSchemes),

      LWR_NUM("fd_prior", "z_min", fd_prior.lower[0]),
      LWR_NUM("fd_prior", "z_max", fd_prior.upper[0]),
      LWR_NUM("fd_prior", "rho_j_min", fd_prior.lower[1]),
      LWR_NUM("fd_prior", "rho_j_max", fd_prior.upper[1]),
      LWR_NUM("fd_prior", "u_min", fd_prior.lower[2]),
      LWR_NUM("fd_prior", "u_max", fd_prior.upper[2]),
      LWR_NUM("fd_prior", "omega_min", fd_prior.lower[3]),
      LWR_NUM("fd_prior", "omega_max", fd_prior.upper[3]),

      LWR_NUM("ou", "beta", ou.beta),
      LWR_NUM("ou", "sigma", ou.sigma),
      LWR_INT("ou", "truncation", ou.truncation),
      LWR_KNOTS("ou", "mu_inlet_knots", ou.inlet.knots),
      LWR_STR("ou", "mu_inlet_curves", ou.inlet.curves),
      LWR_NUM("ou", "mu_inlet_curves_dt", ou.inlet.curves_dt),
      LWR_INT("ou", "mu_inlet_smoothing", ou.inlet.smoothing),
      LWR_KNOTS("ou", "mu_outlet_knots", ou.outlet.knots),
      LWR_STR("ou", "mu_outlet_curves", ou.outlet.curves),
      LWR_NUM("ou", "mu_outlet_curves_dt", ou.outlet.curves_dt),
      LWR_INT("ou", "mu_outlet_smoothing", ou.outlet.smoothing),

      LWR_INT("sampler", "walkers", sampler.walkers),
      LWR_NUM("sampler", "stretch_a", sampler.stretch_a),
      Field{"sampler", "move_probabilities", [](const RunConfig& c) { return fmt_list(c.sampler.move_probabilities); },
            [](RunConfig& c, const std::string& v) {
              const auto p = to_list(v, "sampler.move_probabilities");
              if (p.size() != 4) throw ConfigError("sampler.move_probabilities: expected 4 values");
              std::copy(p.begin(), p.end(), c.sampler.move_probabilities.begin());
            }},
      LWR_LIST("sampler", "betas", sampler.betas),
      LWR_LIST("sampler", "pcn_omega_outlet", sampler.pcn_omega_outlet),
      LWR_LIST("sampler", "pcn_omega_inlet", sampler.pcn_omega_inlet),
      LWR_INT("sampler", "iterations", sampler.iterations),
      LWR_INT("sampler", "thin", sampler.thin),
      LWR_INT("sampler", "seed", sampler.seed),
      LWR_INT("sampler", "threads", sampler.threads),
      LWR_ENUM("sampler", "split", sampler.split, kSplits),
      LWR_NUM("sampler", "init_bc_scale", sampler.init_bc_scale),
      LWR_NUM("sampler", "burn_fraction", sampler.burn_fraction),
      LWR_INT("sampler", "checkpoint_every", extras.checkpoint_every),
      Field{"sampler", "tune_temperatures",
            [](const RunConfig& c) { return std::string(c.extras.tune_temperatures ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) {
              c.extras.tune_temperatures = to_bool(v, "sampler.tune_temperatures");
            }},
      LWR_INT("sampler", "pilot_iterations", extras.pilot_iterations),

      LWR_STR("data", "observations", data.observations),
      LWR_INT("data", "burn_in", data.burn_in),
      LWR_ENUM("data", "flow_sampling", data.sampling, kSampling),
      LWR_NUM("data", "window", data.window),
      LWR_NUM("data", "flow_floor", data.flow_floor),
      LWR_NUM("data", "max_faulty_fraction", data.max_faulty_fraction),

      LWR_NUM("synth", "z", synth.fd.z),
      LWR_NUM("synth", "rho_j", synth.fd.rho_j),
      LWR_NUM("synth", "u", synth.fd.u),
      LWR_NUM("synth", "omega", synth.fd.omega),
      LWR_KNOTS("synth", "bc_in_knots", synth.bc_in),
      LWR_KNOTS("synth", "bc_out_knots", synth.bc_out),
      LWR_LIST("synth", "positions", synth.positions),
      LWR_LIST("synth", "obs_times", synth.obs_times),
      LWR_ENUM("synth", "noise", synth.noise, kNoise),
      LWR_INT("synth", "seed", synth.seed),

      LWR_STR("output", "dir", output_dir),
  };
  return fields;
}

#undef LWR_NUM
#undef LWR_INT
#undef LWR_LIST
#undef LWR_STR
#undef LWR_ENUM
#undef LWR_KNOTS

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : schema()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

RunConfig from_sections(const std::vector<std::tuple<std::string, std::string, std::string>>& entries) {
  RunConfig c;
  std::set<std::string> known_sections;
  for (const auto& f : schema()) known_sections.insert(f.section);
  for (const auto& [section, key, value] : entries) {
    if (!known_sections.count(section)) throw ConfigError("unknown config section [" + section + "]");
    const Field* f = find_field(section, key);
    if (!f) throw ConfigError("unknown config key " + section + "." + key);
    f->set(c, value);
  }
  c.validate();
  return c;
}

}  // namespace

std::vector<std::pair<double, double>> parse_knots(const std::string& text) {
  std::vector<std::pair<double, double>> knots;
  for (const auto& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("knot '" + item + "' must be time:density");
    knots.emplace_back(to_num(item.substr(0, colon), "knot time"), to_num(item.substr(colon + 1), "knot density"));
  }
  return knots;
}

std::string format_knots(const std::vector<std::pair<double, double>>& knots) {
  std::string out;
  for (std::size_t i = 0; i < knots.size(); ++i) out += (i ? ", " : "") + fmt(knots[i].first) + ":" + fmt(knots[i].second);
  return out;
}

void RunConfig::validate() const {
  grid.validate();
  for (int i = 0; i < 4; ++i) {
    if (!(fd_prior.lower[i] > 0.0 && fd_prior.lower[i] < fd_prior.upper[i])) {
      throw ConfigError("fd_prior: each box needs 0 < min < max");
    }
  }
  try {
    OuParams{ou.beta, ou.sigma, grid.bc_dt}.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("ou: ") + e.what());
  }
  if (ou.truncation < 1 || static_cast<std::size_t>(ou.truncation) > grid.bc_length()) {
    throw ConfigError("ou.truncation must lie in [1, number of boundary samples]");
  }
  for (const MuSource* m : {&ou.inlet, &ou.outlet}) {
    if (m->curves.empty() && m->knots.empty()) throw ConfigError("ou: mu needs knots or a curves file");
    if (!(m->curves_dt > 0.0)) throw ConfigError("ou: curves_dt must be positive");
    if (m->smoothing < 1) throw ConfigError("ou: smoothing window must be >= 1");
  }
  sampler.validate(ou.truncation);
  if (sampler.betas.front() != 1.0) throw ConfigError("sampler.betas must start at 1 (the posterior)");
  if (extras.checkpoint_every < 0) throw ConfigError("sampler.checkpoint_every must be >= 0");
  if (extras.pilot_iterations < 1) throw ConfigError("sampler.pilot_iterations must be >= 1");
  if (!(data.window > 0.0)) throw ConfigError("data.window must be positive");
  if (!(data.flow_floor > 0.0)) throw ConfigError("data.flow_floor must be positive");
  if (!(data.max_faulty_fraction >= 0.0 && data.max_faulty_fraction <= 1.0)) {
    throw ConfigError("data.max_faulty_fraction must lie in [0, 1]");
  }
  if (synth.positions.empty()) throw ConfigError("synth.positions must not be empty");
  if (synth.bc_in.empty() || synth.bc_out.empty()) throw ConfigError("synth: boundary knots must not be empty");
}

RunConfig parse_ini(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  // read_ini drops sections without keys, so headers are checked on the text.
  std::set<std::string> known_sections;
  for (const auto& f : schema()) known_sections.insert(f.section);
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    const auto last = line.find_last_not_of(" \t\r");
    if (first == std::string::npos || line[first] != '[' || line[last] != ']') continue;
    const std::string name = line.substr(first + 1, last - first - 1);
    if (!known_sections.count(name)) throw ConfigError("unknown config section [" + name + "]");
  }
  std::vector<std::tuple<std::string, std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' outside any section");
    for (const auto& [key, value] : body) entries.emplace_back(section, key, value.data());
  }
  return from_sections(entries);
}

RunConfig config_from_json(const nlohmann::json& j) {
  const nlohmann::json& root = j.contains("config") ? j.at("config") : j;
  if (!root.is_object()) throw ConfigError("JSON config must be an object of sections");
  std::vector<std::tuple<std::string, std::string, std::string>> entries;
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object()) throw ConfigError("JSON config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      entries.emplace_back(section, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return from_sections(entries);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return config_from_json(nlohmann::json::parse(buffer.str()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed JSON config " + path.string() + ": " + e.what());
    }
  }
  return parse_ini(buffer.str());
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : schema()) j[f.section][f.key] = f.get(config);
  return j;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& path) {
  if (path) return load_config(*path);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load_config(env);
  RunConfig c;
  c.validate();
  return c;
}

std::vector<double> build_mu(const MuSource& source, const Grid& grid, const std::filesystem::path& base) {
  const std::size_t n = grid.bc_length();
  if (source.curves.empty()) {
    try {
      return piecewise_log_mean(source.knots, grid.bc_dt, n);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("mu knots: ") + e.what());
    }
  }
  std::filesystem::path path = source.curves;
  if (path.is_relative() && !base.empty()) path = base / path;
  const csv::Table table = csv::read(path);
  std::vector<std::vector<double>> curves(table.header.size());
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) curves[c].push_back(csv::to_double(row[c]));
  }
  const std::vector<double> mean = fit_log_mean(curves, source.smoothing);
  return resample_linear(mean, source.curves_dt, grid.bc_dt, n);
}

}  // namespace lwr
