#include "pwabc/gaussian_estimator.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "pwabc/error.hpp"

namespace pwabc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_det_spd(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace

GaussianFactor fit_gaussian_factor(const FactorSampleSet& fs) {
  const auto m = fs.samples.rows();
  const auto d = fs.samples.cols();
  if (m <= d) throw ConfigError("factor " + std::to_string(fs.factor_index) + ": need more than d samples");
  GaussianFactor out;
  out.factor_index = fs.factor_index;
  out.mean = fs.samples.colwise().mean().transpose();
  const Eigen::MatrixXd centred = fs.samples.rowwise() - out.mean.transpose();
  Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(m - 1);
  cov = 0.5 * (cov + cov.transpose());
  out.cov = regularise(cov, &out.jitter);
  return out;
}

PriorCorrection correct_for_prior(const WeightedGaussian& product, const GaussianDensity& prior, int n) {
  const auto& a = product.component.mean;
  const auto& b = product.component.cov;
  const auto d = a.size();
  const double c = 2.0 - n;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  Eigen::LLT<Eigen::MatrixXd> b_llt(b);
  Eigen::LLT<Eigen::MatrixXd> pri_llt(prior.cov);
  if (b_llt.info() != Eigen::Success || pri_llt.info() != Eigen::Success)
    throw NumericalError("product or prior covariance is not positive definite");
  const Eigen::MatrixXd b_inv = b_llt.solve(eye);
  const Eigen::MatrixXd pri_inv = pri_llt.solve(eye);

  Eigen::MatrixXd precision = b_inv + c * pri_inv;
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Eigen::MatrixXd> post_llt(precision);
  if (post_llt.info() != Eigen::Success) throw NumericalError("prior-correction made precision indefinite");

  PriorCorrection out;
  Eigen::MatrixXd post_cov = post_llt.solve(eye);
  post_cov = 0.5 * (post_cov + post_cov.transpose());
  out.posterior.mean = post_llt.solve(c * (pri_inv * prior.mean) + b_inv * a);
  out.posterior.cov = std::move(post_cov);

  // Residual of the completed square: -c/2 (a - mu)' (Sigma + c B)^-1 (a - mu);
  // Sigma + c B is positive definite whenever the corrected precision is.
  double resid = 0.0;
  if (c != 0.0) {
    Eigen::MatrixXd mix = prior.cov + c * b;
    mix = 0.5 * (mix + mix.transpose());
    Eigen::LLT<Eigen::MatrixXd> mix_llt(mix);
    if (mix_llt.info() != Eigen::Success) throw NumericalError("prior-correction made precision indefinite");
    const Eigen::VectorXd diff = a - prior.mean;
    resid = -0.5 * c * diff.dot(mix_llt.solve(diff));
  }
  const double dd = static_cast<double>(d);
  const double log_det_2pi_prior = dd * kLog2Pi + log_det_spd(pri_llt);
  out.log_integral = product.log_weight - 0.5 * log_det_spd(b_llt) - 0.5 * log_det_spd(post_llt) +
                     (0.5 * n - 1.0) * log_det_2pi_prior + resid;
  return out;
}

double gaussian_box_mass(const GaussianDensity& g, const ParamVec& lower, const ParamVec& upper) {
  const auto d = g.mean.size();
  if (d == 1) {
    const double sd = std::sqrt(g.cov(0, 0));
    auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - g.mean[0]) / (sd * std::numbers::sqrt2)); };
    return std::max(0.0, cdf(upper[0]) - cdf(lower[0]));
  }
  // Midpoint rule over the box clipped to +-10 sd of the Gaussian.
  ParamVec lo(d), hi(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double sd = std::sqrt(g.cov(k, k));
    lo[k] = std::max(lower[k], g.mean[k] - 10.0 * sd);
    hi[k] = std::min(upper[k], g.mean[k] + 10.0 * sd);
    if (!(lo[k] < hi[k])) return 0.0;
  }
  const int points = d == 2 ? 400 : d == 3 ? 120 : 24;
  const Lattice lattice(lo, hi, std::vector<int>(static_cast<std::size_t>(d), points));
  const GaussianEvaluator eval(g);
  std::vector<double> logvals(lattice.cell_count());
  ParamVec x(d);
  for (std::size_t i = 0; i < logvals.size(); ++i) {
    lattice.cell_center(i, x);
    logvals[i] = eval(x);
  }
  return std::min(1.0, std::exp(lattice_integral(logvals, lattice)));
}

GaussianPosterior assemble_gaussian_posterior(std::span<const GaussianFactor> factors, const PriorSpec& prior) {
  if (factors.empty()) throw ConfigError("posterior assembly needs at least one factor");
  validate(prior);
  std::vector<GaussianDensity> densities;
  densities.reserve(factors.size());
  for (const auto& f : factors) {
    if (f.mean.size() != prior.dim()) throw ConfigError("factor and prior dimensions differ");
    densities.push_back(f.density());
  }

  GaussianPosterior out;
  out.product = gaussian_product(densities);
  out.n = static_cast<int>(factors.size()) + 1;
  out.prior = prior;
  if (prior.is_gaussian()) {
    auto corrected = correct_for_prior(out.product, prior.as_gaussian(), out.n);
    out.mean = std::move(corrected.posterior.mean);
    out.cov = std::move(corrected.posterior.cov);
    out.log_integral = corrected.log_integral;
  } else {
    // prior^(2-n) is the constant vol^(n-2) on the box.
    out.mean = out.product.component.mean;
    out.cov = out.product.component.cov;
    out.truncated = true;
    out.truncation_mass = gaussian_box_mass(out.product.component, prior.lower, prior.upper);
    out.log_integral = out.product.log_weight + (out.n - 2.0) * prior.box_log_volume() +
                       std::log(out.truncation_mass);
  }
  return out;
}

double log_marginal_gaussian(const GaussianPosterior& posterior, std::span<const double> ci_logs) {
  if (static_cast<int>(ci_logs.size()) != posterior.n - 1)
    throw ConfigError("need one log c_i per factor");
  return std::accumulate(ci_logs.begin(), ci_logs.end(), 0.0) + posterior.log_integral;
}

double log_marginal_gaussian(std::span<const GaussianFactor> factors, const PriorSpec& prior,
                             std::span<const double> ci_logs) {
  return log_marginal_gaussian(assemble_gaussian_posterior(factors, prior), ci_logs);
}

std::vector<ParamVec> sample_gaussian_posterior(const GaussianPosterior& posterior, std::size_t count,
                                                RandomStream& rng) {
  if (posterior.truncated && posterior.truncation_mass < 1e-6)
    throw NumericalError("truncated posterior has less than 1e-6 mass inside the prior box");
  const auto d = posterior.mean.size();
  const Eigen::MatrixXd l = regularised_cholesky(posterior.cov).llt.matrixL();
  std::normal_distribution<double> normal;
  std::vector<ParamVec> out;
  out.reserve(count);
  Eigen::VectorXd z(d);
  while (out.size() < count) {
    for (Eigen::Index k = 0; k < d; ++k) z[k] = normal(rng);
    ParamVec x = posterior.mean + l * z;
    if (posterior.truncated && !std::isfinite(posterior.prior.logpdf(x))) continue;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace pwabc
