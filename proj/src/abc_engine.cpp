#include "pwabc/abc_engine.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include "pwabc/error.hpp"
#include "pwabc/parallel.hpp"

namespace pwabc {

void validate(const ABCConfig& cfg) {
  if (cfg.m < 2) throw ConfigError("abc.m must be at least 2");
  if (cfg.max_draws_per_factor < cfg.m) throw ConfigError("abc.max_draws must be at least abc.m");
  validate(cfg.ball);
}

double RunReport::mean_acceptance() const {
  if (acceptance_rates.empty()) return 0.0;
  return std::accumulate(acceptance_rates.begin(), acceptance_rates.end(), 0.0) /
         static_cast<double>(acceptance_rates.size());
}

bool accept(const StateVec& simulated, const StateVec& observed, const LpBallSpec& ball) {
  if (ball.discrete && ball.epsilon == 0.0) return simulated == observed;
  return lp_distance(simulated, observed, ball.p) <= ball.epsilon;
}

FactorSampleSet sample_factor(const ModelSpec& model, const PriorSpec& prior, const Observation& from,
                              const Observation& to, const ABCConfig& cfg, int factor_index,
                              std::atomic<std::int64_t>* progress) {
  validate(cfg);
  if (cfg.ball.discrete != model.discrete())
    throw ConfigError("tolerance ball discreteness does not match the model");
  if (prior.dim() != model.param_dim()) throw ConfigError("prior dimension does not match the model");

  FactorSampleSet out;
  out.factor_index = factor_index;
  out.from = from;
  out.to = to;
  out.samples.resize(cfg.m, prior.dim());

  ParamVec theta(prior.dim());
  std::int64_t accepted = 0;
  std::int64_t draw = 0;
  while (accepted < cfg.m) {
    if (draw >= cfg.max_draws_per_factor) {
      if (progress) progress->fetch_add(draw, std::memory_order_relaxed);
      throw CappedOutError(factor_index, accepted, draw);
    }
    RandomStream rng(cfg.seed, static_cast<std::uint64_t>(factor_index), static_cast<std::uint64_t>(draw));
    ++draw;
    sample_prior(prior, rng, theta);
    const auto simulated = simulate_transition(model, theta, from, to.time, rng);
    if (!simulated) {
      ++out.runaway_draws;
      continue;
    }
    if (accept(*simulated, to.state, cfg.ball)) out.samples.row(accepted++) = theta.transpose();
  }
  out.total_draws = draw;
  if (progress) progress->fetch_add(draw, std::memory_order_relaxed);
  return out;
}

std::vector<FactorSampleSet> sample_all_factors(const ModelSpec& model, const PriorSpec& prior,
                                                const Dataset& data, const ABCConfig& cfg, RunReport* report) {
  validate(data, model);
  validate(cfg);
  const std::size_t factors = data.size() - 1;
  std::vector<std::optional<FactorSampleSet>> results(factors);
  std::vector<std::optional<CappedOutError>> failures(factors);
  std::vector<double> seconds(factors, 0.0);
  std::atomic<std::int64_t> calls{0};

  parallel_for(factors, cfg.workers, [&](std::size_t k) {
    const int index = static_cast<int>(k) + 2;
    const auto start = std::chrono::steady_clock::now();
    try {
      results[k] = sample_factor(model, prior, data.observations[k], data.observations[k + 1], cfg, index, &calls);
    } catch (const CappedOutError& e) {
      failures[k] = e;
    }
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  std::vector<CappedOutError> failed;
  for (auto& f : failures)
    if (f) failed.push_back(*f);
  if (!failed.empty()) throw FactorFailures(std::move(failed));

  std::vector<FactorSampleSet> out;
  out.reserve(factors);
  for (auto& r : results) out.push_back(std::move(*r));

  if (report) {
    report->acceptance_rates.clear();
    report->log_ci.clear();
    report->timings.clear();
    report->runaway_draws = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      report->acceptance_rates.push_back(out[k].acceptance_rate());
      report->log_ci.push_back(estimate_ci(out[k], cfg.ball));
      report->timings.push_back({out[k].factor_index, seconds[k]});
      report->runaway_draws += out[k].runaway_draws;
    }
    report->simulator_calls = calls.load();
  }
  return out;
}

double estimate_ci(const FactorSampleSet& fs, const LpBallSpec& ball) {
  return std::log(static_cast<double>(fs.m())) - std::log(ball_volume(ball)) -
         std::log(static_cast<double>(fs.total_draws));
}

}  // namespace pwabc
