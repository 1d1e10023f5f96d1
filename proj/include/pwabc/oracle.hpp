#pragma once

#include <cstdint>
#include <string>

#include "pwabc/kde_estimator.hpp"
#include "pwabc/models.hpp"

namespace pwabc {

struct OracleResult {
  LatticePosterior posterior;
  double log_marginal_true = 0.0;
  std::string model_id;
};

/// Exact posterior from the product of exact transition densities, normalised
/// on the lattice. The x_1 term is left out unless `include_first` is set.
/// Unsupported for Lotka-Volterra.
OracleResult exact_posterior_lattice(const ModelSpec& model, const PriorSpec& prior, const Dataset& data,
                                     const Lattice& lattice, bool include_first = false, int workers = 1,
                                     double series_tol = 1e-18);

/// Same posterior as a log-density callback, for coarse-to-fine evaluation.
std::function<double(const ParamVec&)> exact_log_posterior(const ModelSpec& model, const PriorSpec& prior,
                                                           const Dataset& data, bool include_first = false,
                                                           double series_tol = 1e-18);

struct EbcResult {
  Eigen::MatrixXd samples;  // m x d
  std::int64_t draws = 0;

  double acceptance_rate() const noexcept { return static_cast<double>(samples.rows()) / draws; }
};

/// Rejection sampling against the full dataset with exact matching. IID data
/// must match every observation; Markov data are simulated from x_1. Draw j
/// uses RandomStream(seed, streams::kEbc, j). Throws CappedOutError (factor
/// index 0) once `cap` draws are spent.
EbcResult ebc_sample(const ModelSpec& model, const PriorSpec& prior, const Dataset& data, int m,
                     std::int64_t cap, std::uint64_t seed);

struct Divergence {
  double tv = 0.0;
  double kl = 0.0;
};

/// Total variation and KL(p || q) on a shared lattice.
Divergence divergence(const LatticePosterior& p, const LatticePosterior& q);

}  // namespace pwabc
