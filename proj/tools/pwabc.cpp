// Batch front-end: simulate, infer, oracle, report, sweep-q.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pwabc/dataset_io.hpp"
#include "pwabc/error.hpp"
#include "pwabc/pipeline.hpp"
#include "pwabc/report.hpp"

namespace fs = std::filesystem;
using namespace pwabc;

namespace {

struct Options {
  std::string config, out, data, run, oracle;
  bool force = false;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

fs::path output_dir(const Options& o, const RunConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (!cfg.output.empty()) return cfg.output;
  throw ConfigError("no output directory; pass --out or set \"output\" in the config");
}

Dataset load_data(const Options& o, const RunConfig& cfg) {
  const std::string path = !o.data.empty() ? o.data : cfg.data;
  if (path.empty()) throw ConfigError("no dataset; pass --data or set \"data\" in the config");
  return read_dataset(path);
}

// The echoed config carries the seed override; the worker count stays out
// of it so that artifacts do not depend on it.
RunConfig load(const Options& o, RunConfig& echo) {
  echo = load_run_config(o.config);
  if (o.seed) echo.abc.seed = *o.seed;
  RunConfig cfg = echo;
  if (o.workers) cfg.abc.workers = *o.workers;
  return cfg;
}

void print_failures(const FactorFailures& f) {
  for (const auto& e : f.failures())
    std::fprintf(stderr, "capped: factor %d, %lld accepted after %lld draws\n", e.factor_index(),
                 static_cast<long long>(e.accepted()), static_cast<long long>(e.draws()));
}

int cmd_simulate(const Options& o) {
  RunConfig echo;
  RunConfig cfg = load(o, echo);
  if (o.seed) cfg.data_seed = *o.seed;
  const auto dir = output_dir(o, cfg);
  const auto data = simulate_from_config(cfg);
  prepare_output_dir(dir, o.force);
  write_dataset(data, dir / "data.csv");
  std::printf("simulated %zu observations of %s into %s\n", data.size(), data.model_id.c_str(),
              (dir / "data.csv").c_str());
  return 0;
}

int cmd_infer(const Options& o) {
  RunConfig echo;
  const RunConfig cfg = load(o, echo);
  const auto dir = output_dir(o, cfg);
  const auto data = load_data(o, cfg);
  prepare_output_dir(dir, o.force);
  const auto result = run_inference(cfg, data);
  write_infer_artifacts(echo, data, result, dir);
  for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("factors: %zu, mean acceptance %.4g\n", result.factors.size(), result.report.mean_acceptance());
  if (result.log_marginal_gaussian) std::printf("log marginal (gaussian): %.6g\n", *result.log_marginal_gaussian);
  if (result.log_marginal_kde) std::printf("log marginal (kde): %.6g\n", *result.log_marginal_kde);
  std::printf("artifacts in %s (%.3g s)\n", dir.c_str(), result.seconds);
  return 0;
}

int cmd_oracle(const Options& o) {
  RunConfig echo;
  const RunConfig cfg = load(o, echo);
  const auto dir = output_dir(o, cfg);
  const auto data = load_data(o, cfg);
  prepare_output_dir(dir, o.force);
  const auto result = run_oracle(cfg, data);
  write_oracle_artifacts(echo, result, dir);
  std::printf("log marginal (exact): %.6g\n", result.log_marginal_true);
  return 0;
}

int cmd_report(const Options& o) {
  if (o.out.empty()) throw ConfigError("report needs --out");
  prepare_output_dir(o.out, o.force);
  run_report(o.run, o.oracle.empty() ? std::nullopt : std::optional<fs::path>(o.oracle), o.out);
  std::printf("report in %s\n", o.out.c_str());
  return 0;
}

int cmd_sweep(const Options& o) {
  RunConfig echo;
  const RunConfig cfg = load(o, echo);
  const auto dir = output_dir(o, cfg);
  const auto data = load_data(o, cfg);
  if (cfg.estimator.q_list.empty()) throw ConfigError("sweep-q needs estimator.q_list");
  prepare_output_dir(dir, o.force);
  std::vector<FactorSampleSet> factors;
  if (!o.run.empty()) {
    factors = read_factor_samples(o.run, data);
  } else {
    factors = sample_all_factors(cfg.model, cfg.prior, data, cfg.abc);
  }
  run_sweep_q(cfg, factors, dir);
  write_text(dir / "config.json", to_json_text(echo));
  std::printf("%zu q values swept into %s\n", cfg.estimator.q_list.size(), (dir / "q_sweep").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise approximate Bayesian computation for Markov models"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "run configuration (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("--force", o.force, "overwrite a non-empty output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "simulate a dataset from the configured design");
  add_common(simulate, true);
  simulate->add_option("--seed", o.seed, "overrides model.seed");

  auto* infer = app.add_subcommand("infer", "run PW-ABC and the configured estimators");
  add_common(infer, true);
  infer->add_option("--data", o.data, "dataset CSV");
  infer->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  infer->add_option("--seed", o.seed, "overrides abc.seed");

  auto* oracle = app.add_subcommand("oracle", "exact posterior and marginal likelihood on a lattice");
  add_common(oracle, true);
  oracle->add_option("--data", o.data, "dataset CSV");
  oracle->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "comparison tables and plot files for a run");
  report->add_option("--run", o.run, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--oracle", o.oracle, "oracle directory")->check(CLI::ExistingDirectory);
  report->add_option("--out", o.out, "output directory")->required();
  report->add_flag("--force", o.force, "overwrite a non-empty output directory");

  auto* sweep = app.add_subcommand("sweep-q", "kernel posteriors for each q in estimator.q_list");
  add_common(sweep, true);
  sweep->add_option("--data", o.data, "dataset CSV");
  sweep->add_option("--run", o.run, "reuse factor samples from this run directory")->check(CLI::ExistingDirectory);
  sweep->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", o.seed, "overrides abc.seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*infer) return cmd_infer(o);
    if (*oracle) return cmd_oracle(o);
    if (*report) return cmd_report(o);
    if (*sweep) return cmd_sweep(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const FactorFailures& e) {
    print_failures(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
