#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lwr/commands.hpp"
#include "lwr/config.hpp"
#include "lwr/csv.hpp"
#include "lwr/diagnostics.hpp"
#include "lwr/errors.hpp"

using namespace lwr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(LWR_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// A run small enough to finish in seconds.
std::string small_ini(const std::string& noise, long iterations) {
  std::ostringstream s;
  s << "[grid]\nroad_length = 1\nn_cells = 20\nt_final = 6\nbc_dt = 0.05\n\n"
    << "[ou]\nmu_inlet_knots = 0:70, 6:70\nmu_outlet_knots = 0:280, 6:280\n\n"
    << "[sampler]\niterations = " << iterations << "\nthin = 2\nseed = 5\n\n"
    << "[data]\nburn_in = 1\n\n"
    << "[extras]\n"
    << "[synth]\nbc_in_knots = 0:60, 6:90\nbc_out_knots = 0:300, 6:260\npositions = 0, 0.5, 1\n"
    << "noise = " << noise << "\nseed = 3\n";
  return s.str();
}

// Removes the [extras] stub used to check unknown sections.
std::string strip_extras(std::string ini) {
  const auto pos = ini.find("[extras]\n");
  ini.erase(pos, 9);
  return ini;
}

void compare_dirs(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  REQUIRE_FALSE(files.empty());
  for (const auto& f : files) {
    INFO(f.string());
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("defaults reproduce the reference setup") {
    const RunConfig c;
    CHECK(c.sampler.walkers == 13);
    CHECK(c.sampler.betas == std::vector<double>{1.0, 0.76, 0.58, 0.44});
    CHECK(c.sampler.move_probabilities == std::array<double, 4>{0.25, 0.125, 0.125, 0.5});
    CHECK(c.sampler.pcn_omega_outlet == std::vector<double>{0.078, 0.09, 0.11, 0.15});
    CHECK(c.sampler.pcn_omega_inlet == std::vector<double>{0.155, 0.17, 0.2, 0.25});
    CHECK(c.sampler.iterations == 102000);
    CHECK(c.sampler.thin == 100);
    CHECK(c.sampler.stretch_a == 2.0);
    CHECK(c.ou.truncation == 4);
    CHECK(c.ou.beta == 0.22);
    CHECK(c.ou.sigma == 0.256);
    CHECK(c.fd_prior.lower == std::array<double, 4>{100.0, 300.0, 1.0, 0.004});
    CHECK(c.fd_prior.upper == std::array<double, 4>{400.0, 800.0, 10.0, 10.0});
    CHECK(c.grid.n_cells == 259);
    CHECK(c.grid.road_length == 5.0);
    CHECK(c.grid.bc_dt == 0.025);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("config round trips through INI and JSON") {
    RunConfig c = parse_ini(strip_extras(small_ini("rounded", 7)));
    CHECK(c.grid.n_cells == 20);
    CHECK(c.sampler.iterations == 7);
    CHECK(c.synth.noise == CountNoise::Rounded);
    CHECK(c.synth.positions == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(c.ou.outlet.knots.front().second == 280.0);
    c.sampler.betas = {1.0, 0.5};
    c.sampler.pcn_omega_inlet = {0.1, 0.2};
    c.sampler.pcn_omega_outlet = {0.1, 0.2};
    c.solver.scheme = Scheme::Godunov;
    const RunConfig from_ini = parse_ini(to_ini(c));
    CHECK(to_json(from_ini) == to_json(c));
    const RunConfig from_json = config_from_json(to_json(c));
    CHECK(to_json(from_json) == to_json(c));
    // A run manifest carries its config.
    CHECK(to_json(config_from_json(nlohmann::json{{"config", to_json(c)}, {"iterations", 3}})) == to_json(c));

    const auto knots = parse_knots("0:60, 8.5:85,30:80");
    CHECK(knots.size() == 3);
    CHECK(knots[1] == std::pair<double, double>{8.5, 85.0});
    CHECK(parse_knots(format_knots(knots)) == knots);
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_ini(small_ini("poisson", 3)), ConfigError);  // unknown [extras]
    CHECK_THROWS_AS(parse_ini("[grid]\nn_cels = 5\n"), ConfigError);
    CHECK_THROWS_AS(parse_ini("[grid]\nn_cells = five\n"), ConfigError);
    CHECK_THROWS_AS(parse_ini("[grid]\nscheme = weno\n"), ConfigError);
    CHECK_THROWS_AS(parse_ini("[sampler]\nbetas = 0.9, 0.5\npcn_omega_inlet = 0.1, 0.1\npcn_omega_outlet = 0.1, 0.1\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_ini("[sampler]\nmove_probabilities = 0.5, 0.5, 0.5, 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_ini("[ou]\nmu_inlet_knots = 0:60, 5\n"), ConfigError);
    CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "lwr_no_such_config.ini"), ConfigError);
  }

  TEST_CASE("config path from the environment") {
    const fs::path dir = fresh_dir("lwr_cli_env");
    write_file(dir / "env.ini", "[grid]\nn_cells = 31\n");
    ::setenv(kConfigEnvVar, (dir / "env.ini").c_str(), 1);
    CHECK(resolve_config(std::nullopt).grid.n_cells == 31);
    write_file(dir / "explicit.ini", "[grid]\nn_cells = 17\n");
    CHECK(resolve_config(dir / "explicit.ini").grid.n_cells == 17);
    ::unsetenv(kConfigEnvVar);
    CHECK(resolve_config(std::nullopt).grid.n_cells == 259);
  }

  TEST_CASE("exit codes") {
    CHECK(run_guarded([] { return kExitOk; }) == 0);
    CHECK(run_guarded([]() -> int { throw ConfigError("x"); }) == kExitConfig);
    CHECK(run_guarded([]() -> int { throw DataError("x"); }) == kExitData);
    CHECK(run_guarded([]() -> int { throw NumericalError("x"); }) == kExitNumerical);

    const fs::path dir = fresh_dir("lwr_cli_exit");
    const std::string missing = (dir / "no_such_bc.csv").string();
    write_file(dir / "bc.csv", "density\n70\n");
    const Outcome o = run_cli("solve --bc-in " + missing + " --bc-out " + (dir / "bc.csv").string());
    CHECK(o.code == kExitData);
    CHECK(o.output.find(missing) != std::string::npos);

    write_file(dir / "bad.ini", "[grid]\nn_cels = 4\n");
    CHECK(run_cli("solve -c " + (dir / "bad.ini").string() + " --bc-in a --bc-out b").code == kExitConfig);
    CHECK(run_cli("frobnicate").code == kExitConfig);
    CHECK(run_cli("solve").code == kExitConfig);
    // A series shorter than the horizon is a configuration problem.
    CHECK(run_cli("solve --bc-in " + (dir / "bc.csv").string() + " --bc-out " + (dir / "bc.csv").string()).code ==
          kExitConfig);
  }

  TEST_CASE("constant scenario solves to a constant field") {
    const fs::path dir = fresh_dir("lwr_cli_const");
    write_file(dir / "c.ini", "[grid]\nroad_length = 2\nn_cells = 40\nt_final = 3\n");
    std::string series = "density\n";
    for (int i = 0; i <= 120; ++i) series += "88\n";
    write_file(dir / "bc.csv", series);
    const Outcome o = run_cli("solve -c " + (dir / "c.ini").string() + " --bc-in " + (dir / "bc.csv").string() +
                              " --bc-out " + (dir / "bc.csv").string() + " -o " + (dir / "field.csv").string());
    REQUIRE(o.code == 0);
    const csv::Table t = csv::read(dir / "field.csv");
    CHECK(t.header.size() == 5);  // x and minutes 0..3
    CHECK(t.rows.size() == 40);
    for (const auto& row : t.rows) {
      for (std::size_t c = 1; c < row.size(); ++c) CHECK(csv::to_double(row[c]) == 88.0);
    }
    const nlohmann::json meta = nlohmann::json::parse(slurp(dir / "field.json"));
    CHECK(meta.at("n_cells") == 40);
  }

  TEST_CASE("prior sampling and OU fitting commands") {
    const fs::path dir = fresh_dir("lwr_cli_prior");
    write_file(dir / "p.ini", "[grid]\nt_final = 10\n[ou]\nmu_inlet_knots = 0:50, 10:100\n");
    REQUIRE(run_cli("prior-sample -c " + (dir / "p.ini").string() + " -n 3 -o " + (dir / "s.csv").string()).code == 0);
    const csv::Table s = csv::read(dir / "s.csv");
    CHECK(s.header.size() == 4);
    CHECK(s.rows.size() == 401);
    for (const auto& row : s.rows) CHECK(csv::to_double(row[1]) > 0.0);

    std::vector<std::vector<double>> rows(120, std::vector<double>(6));
    for (int c = 0; c < 6; ++c) {
      Rng rng = make_stream(9, {static_cast<std::uint64_t>(c)});
      const auto x = sample_ou(OuParams{0.22, 0.256, 1.0}, 120, rng);
      for (int t = 0; t < 120; ++t) rows[t][c] = 60.0 * std::exp(x[t]);
    }
    csv::write(dir / "curves.csv", {"d1", "d2", "d3", "d4", "d5", "d6"}, rows);
    REQUIRE(run_cli("fit-ou " + (dir / "curves.csv").string() + " --iterations 600 --burn-in 200 -o " +
                    (dir / "ou.json").string())
                .code == 0);
    const nlohmann::json fit = nlohmann::json::parse(slurp(dir / "ou.json"));
    CHECK(fit.at("beta").get<double>() > 0.0);
    CHECK(fit.at("sigma").get<double>() > 0.0);
  }

  TEST_CASE("synthesize, infer, resume and diagnose") {
    const fs::path dir = fresh_dir("lwr_cli_infer");
    write_file(dir / "run.ini", strip_extras(small_ini("poisson", 10)));
    const std::string cfg = " -c " + (dir / "run.ini").string();
    REQUIRE(run_cli("synthesize" + cfg + " -o " + (dir / "twin").string()).code == 0);
    for (const char* f : {"twin.csv", "twin_obs.csv", "twin_truth.json", "twin_bc_in.csv", "twin_config.ini"}) {
      CHECK(fs::exists(dir / "twin" / f));
    }
    const std::string obs = " --observations " + (dir / "twin" / "twin.csv").string();

    const Outcome smoke = run_cli("infer -q" + cfg + obs + " -o " + (dir / "a").string());
    REQUIRE(smoke.code == 0);
    const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest.at("iterations") == 10);
    for (const auto& f : manifest.at("files")) CHECK(fs::exists(dir / "a" / f.get<std::string>()));
    const csv::Table chain = csv::read(dir / "a" / "chains" / "T0_W00.csv");
    CHECK(chain.header == std::vector<std::string>{"iteration", "z", "rho_j", "u", "omega", "loglik"});
    CHECK(chain.rows.size() == 6);
    for (const auto& row : chain.rows) {
      for (const auto& field : row) CHECK(std::isfinite(csv::to_double(field)));
    }
    const csv::Table bc = csv::read(dir / "a" / "bc_mean.csv");
    CHECK(bc.rows.size() == 121);

    // Interrupted at iteration 4, resumed to the end.
    const Outcome stop = run_cli("infer -q" + cfg + obs + " -o " + (dir / "b").string() + " --stop-after 4");
    CHECK(stop.code == 0);
    CHECK_FALSE(fs::exists(dir / "b" / "manifest.json"));
    const nlohmann::json ck = nlohmann::json::parse(slurp(dir / "b" / "checkpoint.json"));
    CHECK(ck.at("state").at("iteration") == 4);
    REQUIRE(run_cli("infer -q --resume" + cfg + obs + " -o " + (dir / "b").string()).code == 0);
    const nlohmann::json resumed = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
    CHECK(resumed.at("iterations") == 10);
    compare_dirs(dir / "a", dir / "b");

    // A changed config refuses to resume.
    write_file(dir / "other.ini", strip_extras(small_ini("poisson", 10)) + "\n[grid]\ncfl_number = 0.8\n");
    CHECK(run_cli("infer -q --resume -c " + (dir / "other.ini").string() + obs + " -o " + (dir / "b").string()).code ==
          kExitConfig);

    const Outcome diag = run_cli("diagnose " + (dir / "a").string() + " --flow 100");
    REQUIRE(diag.code == 0);
    const fs::path out = dir / "a" / "diagnostics";
    for (const char* f : {"trace_z.csv", "parameters.csv", "fd_scatter.csv", "fd_curves.csv", "density_pairs.csv",
                          "residuals.csv", "field.csv", "field.json", "report.json"}) {
      CHECK(fs::exists(out / f));
    }
    const nlohmann::json report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("parameters").at("z").at("ess").get<double>() >= 1.0);
  }

  TEST_CASE("residuals vanish at the truth of a noise-free twin") {
    const fs::path dir = fresh_dir("lwr_cli_closed");
    write_file(dir / "run.ini", strip_extras(small_ini("expected", 4)));
    const std::string cfg = " -c " + (dir / "run.ini").string();
    REQUIRE(run_cli("synthesize" + cfg + " -o " + (dir / "twin").string()).code == 0);
    REQUIRE(run_cli("infer -q" + cfg + " --observations " + (dir / "twin" / "twin_obs.csv").string() + " -o " +
                    (dir / "run").string())
                .code == 0);
    REQUIRE(run_cli("diagnose " + (dir / "run").string() + " --truth " + (dir / "twin" / "twin_truth.json").string())
                .code == 0);
    const csv::Table r = csv::read(dir / "run" / "diagnostics" / "residuals.csv");
    const std::size_t c = r.column("residual");
    CHECK(r.rows.size() == 21);
    for (const auto& row : r.rows) CHECK(csv::to_double(row[c]) == 0.0);
    const nlohmann::json report = nlohmann::json::parse(slurp(dir / "run" / "diagnostics" / "report.json"));
    CHECK(report.at("residual_rms").get<double>() == 0.0);
    CHECK(report.at("evaluated_at") == "truth");
  }

  TEST_CASE("effective sample size") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    std::vector<double> iid(20000);
    for (double& v : iid) v = n01(rng);
    CHECK(effective_sample_size(iid) == doctest::Approx(20000.0).epsilon(0.20));

    std::vector<double> ar(20000);
    double x = 0.0;
    for (double& v : ar) v = x = 0.9 * x + n01(rng);
    // AR(1) with phi = 0.9: n (1 - phi) / (1 + phi).
    CHECK(effective_sample_size(ar) == doctest::Approx(20000.0 * 0.1 / 1.9).epsilon(0.25));

    const std::vector<double> flat(500, 3.0);
    CHECK(effective_sample_size(flat) == doctest::Approx(1.0));
    CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    CHECK(quantile({0.0, 10.0}, 0.25) == 2.5);
    const Interval ci = credible_interval(iid, 0.9);
    CHECK(ci.lower == doctest::Approx(-1.645).epsilon(0.05));
    CHECK(ci.upper == doctest::Approx(1.645).epsilon(0.05));
    CHECK(ci.contains(0.0));
  }
}
