#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pwabc/abc_engine.hpp"
#include "pwabc/core_math.hpp"
#include "pwabc/models.hpp"

namespace pwabc {

/// Moment-matched Gaussian approximation of one factor.
struct GaussianFactor {
  int factor_index = 2;
  ParamVec mean;
  CovMatrix cov;        // sample covariance, jittered when degenerate
  double jitter = 0.0;  // > 0 flags a degenerate sample

  GaussianDensity density() const { return {mean, cov}; }
};

/// Sample mean and unbiased (m - 1) covariance. Requires m > d.
GaussianFactor fit_gaussian_factor(const FactorSampleSet& fs);

struct GaussianPosterior {
  ParamVec mean;  // mu_post (untruncated for a uniform prior)
  CovMatrix cov;  // Sigma_post
  WeightedGaussian product;  // prod_i phi_i^g = w K(.; a, B)
  int n = 2;                 // number of observations, factors + 1
  PriorSpec prior;
  bool truncated = false;        // uniform prior: posterior is K(.; a, B) on the box
  double truncation_mass = 1.0;  // N(a, B) mass inside the box
  /// log of the integral of prod phi_i^g * prior^(2-n).
  double log_integral = 0.0;
};

/// Result of multiplying w K(.; a, B) by a Gaussian prior raised to 2 - n.
struct PriorCorrection {
  GaussianDensity posterior;
  double log_integral;  // log of the integral of w K(.; a, B) prior^(2-n)
};

/// Throws NumericalError("prior-correction made precision indefinite") when
/// (2-n) Sigma_pri^-1 + B^-1 is not positive definite.
PriorCorrection correct_for_prior(const WeightedGaussian& product, const GaussianDensity& prior, int n);

GaussianPosterior assemble_gaussian_posterior(std::span<const GaussianFactor> factors, const PriorSpec& prior);

/// Sum of log c_i plus the log of the closed-form integral.
double log_marginal_gaussian(const GaussianPosterior& posterior, std::span<const double> ci_logs);
double log_marginal_gaussian(std::span<const GaussianFactor> factors, const PriorSpec& prior,
                             std::span<const double> ci_logs);

/// IID draws; rejection onto the box when the posterior is truncated.
std::vector<ParamVec> sample_gaussian_posterior(const GaussianPosterior& posterior, std::size_t count,
                                                RandomStream& rng);

/// Probability that N(mean, cov) lies inside [lower, upper].
double gaussian_box_mass(const GaussianDensity& g, const ParamVec& lower, const ParamVec& upper);

}  // namespace pwabc
