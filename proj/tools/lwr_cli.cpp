#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lwr/commands.hpp"

namespace {

void opt_path(CLI::App* app, const std::string& name, std::optional<std::filesystem::path>& target,
              const std::string& help) {
  app->add_option_function<std::string>(name, [&target](const std::string& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LWR traffic-flow solver and Bayesian inference"};
  app.require_subcommand(1);
  const std::string config_help = std::string("config file (INI or JSON); default $") + lwr::kConfigEnvVar;

  lwr::SolveArgs solve;
  auto* s = app.add_subcommand("solve", "forward solve from boundary series");
  opt_path(s, "-c,--config", solve.config, config_help);
  s->add_option("--bc-in", solve.bc_in, "inlet density series (one column, bc_dt spacing)")->required();
  s->add_option("--bc-out", solve.bc_out, "outlet density series")->required();
  opt_path(s, "--ic", solve.ic, "initial densities per cell");
  s->add_option("--times", solve.times, "output times in minutes")->delimiter(',');
  s->add_option("-o,--out", solve.out, "output CSV");

  lwr::PriorSampleArgs prior;
  auto* p = app.add_subcommand("prior-sample", "draw boundary curves from the log-OU prior");
  opt_path(p, "-c,--config", prior.config, config_help);
  p->add_option("--boundary", prior.boundary, "inlet or outlet");
  p->add_option("-n,--count", prior.count, "number of draws");
  p->add_option("--seed", prior.seed);
  p->add_option("-o,--out", prior.out);

  lwr::FitOuArgs fit_ou;
  auto* f = app.add_subcommand("fit-ou", "fit OU hyperparameters to historical density curves");
  f->add_option("curves", fit_ou.curves, "CSV, one curve per column")->required();
  f->add_option("--dt", fit_ou.dt, "minutes between rows");
  f->add_option("--smoothing", fit_ou.smoothing, "moving-average window for the mean");
  f->add_option("--iterations", fit_ou.iterations);
  f->add_option("--burn-in", fit_ou.burn_in);
  f->add_option("--seed", fit_ou.seed);
  f->add_option("-o,--out", fit_ou.out, "summary JSON");

  lwr::FitDirectArgs direct;
  auto* d = app.add_subcommand("fit-direct", "fit the del Castillo diagram to (density, flow) pairs");
  opt_path(d, "-c,--config", direct.config, config_help);
  d->add_option("data", direct.data, "density,flow CSV or detector CSV")->required();
  d->add_option("--iterations", direct.iterations);
  d->add_option("--seed", direct.seed);
  d->add_option("--init", direct.init, "z,rho_j,u,omega")->delimiter(',')->expected(4);
  d->add_option("-o,--out-dir", direct.out_dir);

  lwr::SynthesizeArgs synth;
  auto* y = app.add_subcommand("synthesize", "generate a synthetic twin from the [synth] section");
  opt_path(y, "-c,--config", synth.config, config_help);
  y->add_option("-o,--out-dir", synth.out_dir);
  y->add_option("--stem", synth.stem);

  lwr::InferArgs infer;
  auto* i = app.add_subcommand("infer", "run the tempered ensemble sampler");
  opt_path(i, "-c,--config", infer.config, config_help);
  opt_path(i, "--observations", infer.observations, "detector CSV (overrides data.observations)");
  i->add_option("-o,--out-dir", infer.out_dir);
  i->add_flag("--resume", infer.resume, "continue from <out-dir>/checkpoint.json");
  i->add_option("--stop-after", infer.stop_after, "checkpoint and stop at this iteration");
  i->add_flag("-q,--quiet", infer.quiet);

  lwr::DiagnoseArgs diag;
  auto* g = app.add_subcommand("diagnose", "ESS, traces, residuals and FD summaries of a run");
  g->add_option("run_dir", diag.run_dir)->required();
  opt_path(g, "-o,--out-dir", diag.out_dir, "default <run_dir>/diagnostics");
  g->add_option_function<double>("--flow", [&diag](double q) { diag.flow = q; }, "flow (veh/min) for density pairs");
  opt_path(g, "--truth", diag.truth, "twin truth JSON; residuals at the truth");
  g->add_option("--fd-curves", diag.fd_curves, "number of posterior FD curves");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lwr::kExitConfig;
  }

  return lwr::run_guarded([&] {
    if (*s) return lwr::cmd_solve(solve);
    if (*p) return lwr::cmd_prior_sample(prior);
    if (*f) return lwr::cmd_fit_ou(fit_ou);
    if (*d) return lwr::cmd_fit_direct(direct);
    if (*y) return lwr::cmd_synthesize(synth);
    if (*i) return lwr::cmd_infer(infer);
    return lwr::cmd_diagnose(diag);
  });
}
