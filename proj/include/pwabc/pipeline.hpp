#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pwabc/abc_engine.hpp"
#include "pwabc/gaussian_estimator.hpp"
#include "pwabc/kde_estimator.hpp"
#include "pwabc/oracle.hpp"
#include "pwabc/run_config.hpp"

namespace pwabc {

/// Refuses a non-empty existing directory unless `force`; creates it otherwise.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Simulates the configured design (model.true_params, n, x0, dt, seed).
Dataset simulate_from_config(const RunConfig& cfg);

struct InferResult {
  std::vector<FactorSampleSet> factors;
  RunReport report;
  std::vector<double> log_ci;
  std::vector<GaussianFactor> gaussian_factors;
  std::optional<GaussianPosterior> gaussian;
  std::optional<double> log_marginal_gaussian;
  std::optional<LatticePosterior> gaussian_lattice;
  std::vector<KDEFactor> kde_factors;
  std::optional<LatticePosterior> kde_lattice;
  std::optional<double> log_marginal_kde;
  std::vector<ParamVec> gaussian_samples, kde_samples;
  std::vector<std::string> warnings;
  int workers = 1;
  double seconds = 0.0;
};

/// Samples every factor and runs the configured estimators.
InferResult run_inference(const RunConfig& cfg, const Dataset& data);

/// Estimators only, on factor samples already drawn.
void assemble_estimators(const RunConfig& cfg, InferResult& result);

/// Inference lattice: configured bounds are used as given; otherwise the
/// default bounds are refined coarse-to-fine around log_g.
LatticePosterior inference_lattice(const RunConfig& cfg, std::span<const FactorSampleSet> factors,
                                   const std::function<double(const ParamVec&)>& log_g);

void write_infer_artifacts(const RunConfig& cfg, const Dataset& data, const InferResult& result,
                           const std::filesystem::path& dir);

/// Reloads factor samples written by write_infer_artifacts.
std::vector<FactorSampleSet> read_factor_samples(const std::filesystem::path& run_dir, const Dataset& data);

/// Exact posterior on a lattice at least twice as fine as the inference default.
OracleResult run_oracle(const RunConfig& cfg, const Dataset& data);
void write_oracle_artifacts(const RunConfig& cfg, const OracleResult& oracle, const std::filesystem::path& dir);

/// Kernel posteriors for every q in estimator.q_list on one shared lattice;
/// writes q_sweep/q_<q>.csv with per-dimension marginals.
void run_sweep_q(const RunConfig& cfg, std::span<const FactorSampleSet> factors, const std::filesystem::path& dir);

}  // namespace pwabc
