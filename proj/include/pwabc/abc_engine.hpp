#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "pwabc/core_math.hpp"
#include "pwabc/models.hpp"

namespace pwabc {

struct ABCConfig {
  int m = 1000;
  LpBallSpec ball;
  std::int64_t max_draws_per_factor = 10'000'000;
  std::uint64_t seed = 1;
  int workers = 1;
};

void validate(const ABCConfig& cfg);

/// Accepted draws for one transition factor phi_i, i in {2..n}.
struct FactorSampleSet {
  int factor_index = 2;
  Eigen::MatrixXd samples;        // m x d
  std::int64_t total_draws = 0;   // M_i
  std::int64_t runaway_draws = 0; // capped trajectories, counted as rejections
  Observation from;               // x_{i-1}
  Observation to;                 // x_i

  int m() const noexcept { return static_cast<int>(samples.rows()); }
  int dim() const noexcept { return static_cast<int>(samples.cols()); }
  double acceptance_rate() const noexcept { return static_cast<double>(m()) / total_draws; }
};

struct FactorTiming {
  int factor_index;
  double seconds;
};

struct RunReport {
  std::vector<double> acceptance_rates;
  std::vector<double> log_ci;
  std::vector<FactorTiming> timings;
  std::int64_t simulator_calls = 0;
  std::int64_t runaway_draws = 0;

  double mean_acceptance() const;
};

/// Acceptance predicate: exact match for discrete data at epsilon = 0,
/// otherwise ||simulated - observed||_p <= epsilon.
bool accept(const StateVec& simulated, const StateVec& observed, const LpBallSpec& ball);

/// Rejection sampler for one factor. Draw j uses RandomStream(seed, factor_index, j).
/// Throws CappedOutError when max_draws_per_factor is exhausted.
FactorSampleSet sample_factor(const ModelSpec& model, const PriorSpec& prior, const Observation& from,
                              const Observation& to, const ABCConfig& cfg, int factor_index,
                              std::atomic<std::int64_t>* progress = nullptr);

/// All n-1 factors, sampled concurrently. Output is independent of cfg.workers.
/// Throws FactorFailures listing every factor that capped out.
std::vector<FactorSampleSet> sample_all_factors(const ModelSpec& model, const PriorSpec& prior,
                                                const Dataset& data, const ABCConfig& cfg,
                                                RunReport* report = nullptr);

/// log c_i estimate: log m - log V - log M_i.
double estimate_ci(const FactorSampleSet& fs, const LpBallSpec& ball);

}  // namespace pwabc
