#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pwabc/abc_engine.hpp"
#include "pwabc/core_math.hpp"
#include "pwabc/gaussian_estimator.hpp"
#include "pwabc/models.hpp"

namespace pwabc {

/// Gaussian-kernel density estimate of one factor with bandwidth
/// H = q m^(-2/(d+4)) Q, Q the (regularised) sample covariance.
class KDEFactor {
 public:
  KDEFactor(int factor_index, Eigen::MatrixXd samples, CovMatrix bandwidth, double q_used);

  int factor_index() const noexcept { return factor_index_; }
  const Eigen::MatrixXd& samples() const noexcept { return samples_; }
  const CovMatrix& bandwidth() const noexcept { return bandwidth_; }
  double q_used() const noexcept { return q_used_; }
  int dim() const noexcept { return static_cast<int>(samples_.cols()); }
  int m() const noexcept { return static_cast<int>(samples_.rows()); }

  /// log phi^k(theta); `scratch` must hold at least m() doubles.
  double logpdf(const ParamVec& theta, std::span<double> scratch) const;

 private:
  int factor_index_;
  Eigen::MatrixXd samples_;
  CovMatrix bandwidth_;
  double q_used_;
  Eigen::MatrixXd whitener_;  // C^-1 with H = C C'
  Eigen::MatrixXd whitened_;  // m x d, column k contiguous
  double log_norm_;           // -log m - log det(2 pi H) / 2
};

/// Bandwidth factor minimising asymptotic MISE for a Gaussian target.
double optimal_q(int d);

/// Requires m > d and q > 0; nullopt selects optimal_q(d).
KDEFactor fit_kde_factor(const FactorSampleSet& fs, std::optional<double> q = std::nullopt);

double kde_logpdf(const KDEFactor& f, const ParamVec& theta);

/// Normalised log density of a posterior on a lattice.
struct LatticePosterior {
  Lattice lattice;
  std::vector<double> log_density;  // lattice_integral(log_density) == 0
  double log_normaliser = 0.0;      // log of the integral before normalisation

  /// Posterior mean under the midpoint rule.
  ParamVec mean() const;
  /// Normalised log density at the cell containing theta (-inf outside).
  double log_density_at(const ParamVec& theta) const;
};

/// Evaluates log g on every cell and normalises. Throws when a value is NaN
/// or +inf, or when the normaliser is -inf ("posterior mass escaped lattice").
LatticePosterior evaluate_on_lattice(const Lattice& lattice,
                                     const std::function<double(const ParamVec&)>& log_g, int workers = 1);

/// Unnormalised log of prod phi_i^k * prior^(2-n); -inf where the prior is zero.
/// The factors must outlive the returned callable.
std::function<double(const ParamVec&)> kde_log_target(std::span<const KDEFactor> factors, const PriorSpec& prior);
std::function<double(const ParamVec&)> gaussian_log_target(std::span<const GaussianFactor> factors,
                                                           const PriorSpec& prior);

/// g = prod phi_i^k * prior^(2-n), evaluated in log space cell by cell.
LatticePosterior assemble_lattice_posterior(std::span<const KDEFactor> factors, const PriorSpec& prior,
                                            const Lattice& lattice, int workers = 1);

/// Same assembly with the Gaussian factor approximations plugged in.
LatticePosterior assemble_lattice_posterior(std::span<const GaussianFactor> factors, const PriorSpec& prior,
                                            const Lattice& lattice, int workers = 1);

/// A Gaussian posterior restricted to a lattice (and the prior box) and normalised there.
LatticePosterior gaussian_posterior_on_lattice(const GaussianPosterior& gp, const Lattice& lattice);

/// Bounds: factor means +-6 of the largest factor sd, clipped to a uniform
/// prior box. Default points: 400 per dim for d <= 2, 120 for d = 3; d > 3 refused.
Lattice default_lattice(std::span<const FactorSampleSet> factors, const PriorSpec& prior,
                        std::optional<int> points_per_dim = std::nullopt);

int default_points_per_dim(int d);

/// Shrinks a lattice to the cells whose log density is within `log_drop` of
/// the maximum, padded by `pad_cells`, keeping the original outer bounds.
Lattice zoom_lattice(const LatticePosterior& coarse, std::vector<int> points_per_dim, double log_drop = 30.0,
                     int pad_cells = 2);

/// Coarse-to-fine evaluation: two zoom passes on a coarse grid, then the
/// final grid with `base.points_per_dim()` inside the zoomed bounds.
LatticePosterior auto_lattice_posterior(const Lattice& base,
                                        const std::function<double(const ParamVec&)>& log_g, int workers = 1);

/// Exact mixture form of prod phi_i^k and its prior-corrected posterior.
struct MixtureProduct {
  std::vector<WeightedGaussian> components;  // w_j K(.; a_j, B), m^(n-1) terms
  std::vector<WeightedGaussian> posterior;   // w'_j K(.; a'_j, B')
  double log_weight_sum = 0.0;               // log sum_j w'_j

  double log_product_pdf(const ParamVec& theta) const;
  /// Normalised posterior mixture density.
  double log_posterior_pdf(const ParamVec& theta) const;
};

inline constexpr std::size_t kMixtureComponentCap = 100'000;

/// Enumerates all index tuples; oracle scale only (m^(n-1) <= 1e5, Gaussian prior).
MixtureProduct mixture_product_exact(std::span<const KDEFactor> factors, const PriorSpec& prior);

/// Sum of log c_i plus the lattice log normaliser.
double log_marginal_kde(const LatticePosterior& lp, std::span<const double> ci_logs);

/// Categorical draw over cells by mass, then uniform within the cell.
std::vector<ParamVec> sample_lattice_posterior(const LatticePosterior& lp, std::size_t count, RandomStream& rng);

}  // namespace pwabc
