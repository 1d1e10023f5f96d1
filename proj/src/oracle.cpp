#include "pwabc/oracle.hpp"

#include <cmath>
#include <limits>

#include "pwabc/error.hpp"

namespace pwabc {

std::function<double(const ParamVec&)> exact_log_posterior(const ModelSpec& model, const PriorSpec& prior,
                                                           const Dataset& data, bool include_first,
                                                           double series_tol) {
  if (!has_exact_transition(model))
    throw ConfigError(std::string("no exact likelihood for model ") + std::string(model.name()));
  validate(data, model, 1);
  validate(prior);
  if (prior.dim() != model.param_dim()) throw ConfigError("prior dimension does not match the model");
  return [model, prior, data, include_first, series_tol](const ParamVec& theta) {
    double s = prior.logpdf(theta);
    if (!std::isfinite(s)) return s;
    const auto& obs = data.observations;
    if (include_first) s += initial_logpdf(model, theta, obs.front());
    for (std::size_t i = 1; i < obs.size(); ++i)
      s += exact_transition_logpdf(model, theta, obs[i - 1], obs[i], series_tol);
    return s;
  };
}

OracleResult exact_posterior_lattice(const ModelSpec& model, const PriorSpec& prior, const Dataset& data,
                                     const Lattice& lattice, bool include_first, int workers,
                                     double series_tol) {
  if (lattice.dim() != model.param_dim()) throw ConfigError("lattice dimension does not match the model");
  const auto log_post = exact_log_posterior(model, prior, data, include_first, series_tol);
  OracleResult out;
  out.posterior = evaluate_on_lattice(lattice, log_post, workers);
  out.log_marginal_true = out.posterior.log_normaliser;
  out.model_id = std::string(model.name());
  return out;
}

EbcResult ebc_sample(const ModelSpec& model, const PriorSpec& prior, const Dataset& data, int m,
                     std::int64_t cap, std::uint64_t seed) {
  if (!model.discrete()) throw ConfigError("exact matching needs a discrete model");
  if (data.size() == 0) throw ConfigError("dataset is empty");
  validate(data, model, 1);
  if (m < 1) throw ConfigError("m must be positive");
  if (prior.dim() != model.param_dim()) throw ConfigError("prior dimension does not match the model");
  const auto& obs = data.observations;

  EbcResult out;
  out.samples.resize(m, prior.dim());
  ParamVec theta(prior.dim());
  int accepted = 0;
  std::int64_t draw = 0;
  while (accepted < m) {
    if (draw >= cap) throw CappedOutError(0, accepted, draw);
    RandomStream rng(seed, streams::kEbc, static_cast<std::uint64_t>(draw));
    ++draw;
    sample_prior(prior, rng, theta);
    bool match = true;
    if (model.iid()) {
      for (const auto& o : obs) {
        const auto x = simulate_transition(model, theta, o, o.time, rng);
        if (!x || *x != o.state) {
          match = false;
          break;
        }
      }
    } else {
      // Each step starts from the observed state: a matching path has it anyway.
      for (std::size_t i = 1; i < obs.size(); ++i) {
        const auto x = simulate_transition(model, theta, obs[i - 1], obs[i].time, rng);
        if (!x || *x != obs[i].state) {
          match = false;
          break;
        }
      }
    }
    if (match) out.samples.row(accepted++) = theta.transpose();
  }
  out.draws = draw;
  return out;
}

Divergence divergence(const LatticePosterior& p, const LatticePosterior& q) {
  if (!(p.lattice == q.lattice)) throw ConfigError("divergence needs identical lattices");
  const double vol = p.lattice.cell_volume();
  Divergence out;
  for (std::size_t i = 0; i < p.log_density.size(); ++i) {
    const double lp = p.log_density[i];
    const double lq = q.log_density[i];
    const double pv = std::exp(lp);
    out.tv += std::abs(pv - std::exp(lq));
    if (pv > 0.0) {
      if (lq == -std::numeric_limits<double>::infinity()) {
        out.kl = std::numeric_limits<double>::infinity();
      } else if (std::isfinite(out.kl)) {
        out.kl += pv * (lp - lq);
      }
    }
  }
  out.tv *= 0.5 * vol;
  if (std::isfinite(out.kl)) out.kl *= vol;
  return out;
}

}  // namespace pwabc
