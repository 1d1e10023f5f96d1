#include "pwabc/kde_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pwabc/error.hpp"
#include "pwabc/kde_kernel.hpp"
#include "pwabc/parallel.hpp"

namespace pwabc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kCellBlock = 256;

void require_prior_positive(const PriorSpec& prior, const Lattice& lattice) {
  if (prior.is_gaussian()) return;
  for (int k = 0; k < lattice.dim(); ++k)
    if (lattice.coordinate(k, 0) < prior.lower[k] ||
        lattice.coordinate(k, lattice.points_per_dim()[k] - 1) > prior.upper[k])
      throw ConfigError("prior density is zero at a lattice point; clip the lattice to the prior box");
}

}  // namespace

// ---------------------------------------------------------------------------
// Kernel factors

KDEFactor::KDEFactor(int factor_index, Eigen::MatrixXd samples, CovMatrix bandwidth, double q_used)
    : factor_index_(factor_index), samples_(std::move(samples)), q_used_(q_used) {
  if (samples_.rows() < 1) throw ConfigError("kernel estimate needs at least one sample");
  auto chol = regularised_cholesky(bandwidth);
  bandwidth_ = chol.matrix;
  const auto d = samples_.cols();
  if (bandwidth_.rows() != d) throw ConfigError("bandwidth and sample dimensions differ");
  const Eigen::MatrixXd l = chol.llt.matrixL();
  whitener_ = l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
  whitened_ = samples_ * whitener_.transpose();
  log_norm_ = -std::log(static_cast<double>(samples_.rows())) -
              0.5 * (static_cast<double>(d) * kLog2Pi + chol.log_det());
}

double KDEFactor::logpdf(const ParamVec& theta, std::span<double> scratch) const {
  if (theta.size() != dim()) throw NumericalError("kernel density dimension mismatch");
  if (scratch.size() < static_cast<std::size_t>(m())) throw NumericalError("kernel scratch buffer too small");
  double z[8];
  const int d = dim();
  if (d > 8) throw NumericalError("kernel density supports at most 8 dimensions");
  for (int k = 0; k < d; ++k) z[k] = whitener_.row(k).dot(theta);
  return log_norm_ + detail::log_kernel_sum(whitened_.data(), static_cast<std::size_t>(whitened_.rows()),
                                            static_cast<std::size_t>(m()), d, z, scratch.data());
}

double optimal_q(int d) {
  return std::pow((d + 2.0) / 4.0, -2.0 / (d + 4.0));
}

KDEFactor fit_kde_factor(const FactorSampleSet& fs, std::optional<double> q) {
  const double q_used = q.value_or(optimal_q(fs.dim()));
  if (!(q_used > 0) || !std::isfinite(q_used)) throw ConfigError("bandwidth factor q must be positive");
  const auto gf = fit_gaussian_factor(fs);  // checks m > d
  const double scale = q_used * std::pow(static_cast<double>(fs.m()), -2.0 / (fs.dim() + 4.0));
  return KDEFactor(fs.factor_index, fs.samples, scale * gf.cov, q_used);
}

double kde_logpdf(const KDEFactor& f, const ParamVec& theta) {
  std::vector<double> scratch(static_cast<std::size_t>(f.m()));
  return f.logpdf(theta, scratch);
}

// ---------------------------------------------------------------------------
// Lattice posteriors

ParamVec LatticePosterior::mean() const {
  ParamVec out = ParamVec::Zero(lattice.dim());
  ParamVec x(lattice.dim());
  const double vol = lattice.cell_volume();
  for (std::size_t i = 0; i < log_density.size(); ++i) {
    if (log_density[i] == kNegInf) continue;
    lattice.cell_center(i, x);
    out += std::exp(log_density[i]) * vol * x;
  }
  return out;
}

double LatticePosterior::log_density_at(const ParamVec& theta) const {
  std::vector<int> idx(static_cast<std::size_t>(lattice.dim()));
  for (int k = 0; k < lattice.dim(); ++k) {
    const double f = std::floor((theta[k] - lattice.lower()[k]) / lattice.width(k));
    if (f < 0 || f >= lattice.points_per_dim()[k]) return kNegInf;
    idx[k] = static_cast<int>(f);
  }
  return log_density[lattice.ravel(idx)];
}

LatticePosterior evaluate_on_lattice(const Lattice& lattice, const std::function<double(const ParamVec&)>& log_g,
                                     int workers) {
  LatticePosterior out;
  out.lattice = lattice;
  out.log_density.resize(lattice.cell_count());
  const std::size_t blocks = (lattice.cell_count() + kCellBlock - 1) / kCellBlock;
  parallel_for(blocks, workers, [&](std::size_t b) {
    ParamVec x(lattice.dim());
    const std::size_t end = std::min(lattice.cell_count(), (b + 1) * kCellBlock);
    for (std::size_t i = b * kCellBlock; i < end; ++i) {
      lattice.cell_center(i, x);
      const double v = log_g(x);
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
        throw NumericalError("log posterior is not a number at a lattice point");
      out.log_density[i] = v;
    }
  });
  out.log_normaliser = lattice_integral(out.log_density, lattice);
  if (!std::isfinite(out.log_normaliser)) throw NumericalError("posterior mass escaped lattice");
  for (double& v : out.log_density) v -= out.log_normaliser;
  return out;
}

std::function<double(const ParamVec&)> kde_log_target(std::span<const KDEFactor> factors, const PriorSpec& prior) {
  if (factors.empty()) throw ConfigError("posterior assembly needs at least one factor");
  std::size_t max_m = 0;
  for (const auto& f : factors) {
    if (f.dim() != prior.dim()) throw ConfigError("factor and prior dimensions differ");
    max_m = std::max(max_m, static_cast<std::size_t>(f.m()));
  }
  const double prior_power = 2.0 - (static_cast<double>(factors.size()) + 1.0);
  return [factors, prior, prior_power, max_m](const ParamVec& theta) {
    const double lp = prior.logpdf(theta);
    if (lp == kNegInf) return kNegInf;
    thread_local std::vector<double> scratch;
    if (scratch.size() < max_m) scratch.resize(max_m);
    double s = 0.0;
    for (const auto& f : factors) s += f.logpdf(theta, scratch);
    return s + prior_power * lp;
  };
}

std::function<double(const ParamVec&)> gaussian_log_target(std::span<const GaussianFactor> factors,
                                                           const PriorSpec& prior) {
  if (factors.empty()) throw ConfigError("posterior assembly needs at least one factor");
  std::vector<GaussianEvaluator> evals;
  evals.reserve(factors.size());
  for (const auto& f : factors) {
    if (f.mean.size() != prior.dim()) throw ConfigError("factor and prior dimensions differ");
    evals.emplace_back(f.density());
  }
  const double prior_power = 2.0 - (static_cast<double>(factors.size()) + 1.0);
  return [evals = std::move(evals), prior, prior_power](const ParamVec& theta) {
    const double lp = prior.logpdf(theta);
    if (lp == kNegInf) return kNegInf;
    double s = 0.0;
    for (const auto& e : evals) s += e(theta);
    return s + prior_power * lp;
  };
}

LatticePosterior assemble_lattice_posterior(std::span<const KDEFactor> factors, const PriorSpec& prior,
                                            const Lattice& lattice, int workers) {
  if (lattice.dim() != prior.dim()) throw ConfigError("lattice and prior dimensions differ");
  require_prior_positive(prior, lattice);
  return evaluate_on_lattice(lattice, kde_log_target(factors, prior), workers);
}

LatticePosterior assemble_lattice_posterior(std::span<const GaussianFactor> factors, const PriorSpec& prior,
                                            const Lattice& lattice, int workers) {
  if (lattice.dim() != prior.dim()) throw ConfigError("lattice and prior dimensions differ");
  require_prior_positive(prior, lattice);
  return evaluate_on_lattice(lattice, gaussian_log_target(factors, prior), workers);
}

LatticePosterior gaussian_posterior_on_lattice(const GaussianPosterior& gp, const Lattice& lattice) {
  const GaussianEvaluator eval(GaussianDensity{gp.mean, gp.cov});
  return evaluate_on_lattice(lattice, [&](const ParamVec& theta) {
    if (gp.truncated && !std::isfinite(gp.prior.logpdf(theta))) return kNegInf;
    return eval(theta);
  });
}

int default_points_per_dim(int d) {
  if (d <= 2) return 400;
  if (d == 3) return 120;
  throw ConfigError("lattice assembly is limited to d <= 3; use the Gaussian backend");
}

Lattice default_lattice(std::span<const FactorSampleSet> factors, const PriorSpec& prior,
                        std::optional<int> points_per_dim) {
  if (factors.empty()) throw ConfigError("default lattice needs at least one factor");
  const int d = factors.front().dim();
  const int points = points_per_dim.value_or(default_points_per_dim(d));
  if (d > 3) default_points_per_dim(d);
  ParamVec lo = ParamVec::Constant(d, std::numeric_limits<double>::infinity());
  ParamVec hi = ParamVec::Constant(d, -std::numeric_limits<double>::infinity());
  ParamVec max_sd = ParamVec::Zero(d);
  for (const auto& fs : factors) {
    const ParamVec mean = fs.samples.colwise().mean().transpose();
    const Eigen::MatrixXd centred = fs.samples.rowwise() - mean.transpose();
    const ParamVec var = centred.colwise().squaredNorm().transpose() / std::max(1.0, fs.m() - 1.0);
    lo = lo.cwiseMin(mean);
    hi = hi.cwiseMax(mean);
    max_sd = max_sd.cwiseMax(var.cwiseSqrt());
  }
  for (int k = 0; k < d; ++k) {
    const double spread = std::max(max_sd[k], 1e-6);
    lo[k] -= 6.0 * spread;
    hi[k] += 6.0 * spread;
    if (!prior.is_gaussian()) {
      lo[k] = std::max(lo[k], prior.lower[k]);
      hi[k] = std::min(hi[k], prior.upper[k]);
      if (!(lo[k] < hi[k])) throw ConfigError("factor samples lie outside the prior box");
    }
  }
  return Lattice(lo, hi, std::vector<int>(static_cast<std::size_t>(d), points));
}

Lattice zoom_lattice(const LatticePosterior& coarse, std::vector<int> points_per_dim, double log_drop,
                     int pad_cells) {
  const auto& lat = coarse.lattice;
  const double top = *std::max_element(coarse.log_density.begin(), coarse.log_density.end());
  std::vector<int> first(lat.points_per_dim()), last(static_cast<std::size_t>(lat.dim()), -1);
  for (std::size_t i = 0; i < coarse.log_density.size(); ++i) {
    if (coarse.log_density[i] < top - log_drop) continue;
    const auto idx = lat.unravel(i);
    for (int k = 0; k < lat.dim(); ++k) {
      first[k] = std::min(first[k], idx[k]);
      last[k] = std::max(last[k], idx[k]);
    }
  }
  ParamVec lo(lat.dim()), hi(lat.dim());
  for (int k = 0; k < lat.dim(); ++k) {
    const int a = std::max(0, first[k] - pad_cells);
    const int b = std::min(lat.points_per_dim()[k], last[k] + 1 + pad_cells);
    lo[k] = lat.lower()[k] + a * lat.width(k);
    hi[k] = b == lat.points_per_dim()[k] ? lat.upper()[k] : lat.lower()[k] + b * lat.width(k);
  }
  return Lattice(lo, hi, std::move(points_per_dim));
}

LatticePosterior auto_lattice_posterior(const Lattice& base, const std::function<double(const ParamVec&)>& log_g,
                                        int workers) {
  const int d = base.dim();
  const int coarse_points = d <= 2 ? 100 : 40;
  std::vector<int> coarse(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) coarse[k] = std::min(coarse_points, base.points_per_dim()[k]);
  auto pass = evaluate_on_lattice(Lattice(base.lower(), base.upper(), coarse), log_g, workers);
  pass = evaluate_on_lattice(zoom_lattice(pass, coarse), log_g, workers);
  return evaluate_on_lattice(zoom_lattice(pass, base.points_per_dim()), log_g, workers);
}

// ---------------------------------------------------------------------------
// Exact mixture (oracle scale)

namespace {

double log_mixture_pdf(std::span<const WeightedGaussian> comps, const ParamVec& theta) {
  if (comps.empty()) return kNegInf;
  // All components share one covariance.
  const GaussianEvaluator shape(GaussianDensity{ParamVec::Zero(theta.size()), comps.front().component.cov});
  std::vector<double> terms;
  terms.reserve(comps.size());
  for (const auto& c : comps) terms.push_back(c.log_weight + shape(theta - c.component.mean));
  return log_sum_exp(terms);
}

}  // namespace

double MixtureProduct::log_product_pdf(const ParamVec& theta) const { return log_mixture_pdf(components, theta); }

double MixtureProduct::log_posterior_pdf(const ParamVec& theta) const {
  return log_mixture_pdf(posterior, theta) - log_weight_sum;
}

MixtureProduct mixture_product_exact(std::span<const KDEFactor> factors, const PriorSpec& prior) {
  if (factors.empty()) throw ConfigError("mixture product needs at least one factor");
  if (!prior.is_gaussian()) throw ConfigError("exact mixture posterior needs a Gaussian prior");
  const int m = factors.front().m();
  const auto d = factors.front().dim();
  const auto k = factors.size();
  double count = 1.0;
  for (const auto& f : factors) {
    if (f.m() != m || f.dim() != d) throw ConfigError("all factors need the same m and d");
    count *= m;
  }
  if (count > static_cast<double>(kMixtureComponentCap))
    throw ConfigError("exact mixture would need more than 1e5 components");

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  std::vector<Eigen::MatrixXd> h_inv;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(d, d);
  double log_det_h_sum = 0.0;
  for (const auto& f : factors) {
    const auto chol = regularised_cholesky(f.bandwidth());
    h_inv.push_back(chol.inverse());
    precision += h_inv.back();
    log_det_h_sum += chol.log_det();
  }
  Eigen::LLT<Eigen::MatrixXd> p_llt(precision);
  Eigen::MatrixXd b = p_llt.solve(eye);
  b = 0.5 * (b + b.transpose());
  double log_det_b = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det_b -= 2.0 * std::log(p_llt.matrixLLT()(i, i));

  const int n = static_cast<int>(k) + 1;
  const double dd = static_cast<double>(d);
  const double log_w_const = -(n - 1.0) * std::log(static_cast<double>(m)) + 0.5 * (dd * kLog2Pi + log_det_b) -
                             0.5 * (static_cast<double>(k) * dd * kLog2Pi + log_det_h_sum);

  // Weighted sample terms H_i^-1 theta*_{i(j)}, precomputed per factor.
  std::vector<Eigen::MatrixXd> weighted(k);
  for (std::size_t i = 0; i < k; ++i) weighted[i] = factors[i].samples() * h_inv[i];  // row j = (H^-1 s_j)'

  MixtureProduct out;
  out.components.reserve(static_cast<std::size_t>(count));
  out.posterior.reserve(static_cast<std::size_t>(count));
  const auto pri = prior.as_gaussian();
  std::vector<int> tuple(k, 0);
  std::vector<double> log_w_prime;
  log_w_prime.reserve(static_cast<std::size_t>(count));
  while (true) {
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < k; ++i) shift += weighted[i].row(tuple[i]).transpose();
    Eigen::VectorXd a = b * shift;
    double quad = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const Eigen::VectorXd r = factors[i].samples().row(tuple[i]).transpose() - a;
      quad += r.dot(h_inv[i] * r);
    }
    WeightedGaussian comp{log_w_const - 0.5 * quad, GaussianDensity{std::move(a), b}};
    auto corrected = correct_for_prior(comp, pri, n);
    log_w_prime.push_back(corrected.log_integral);
    out.posterior.push_back(WeightedGaussian{corrected.log_integral, std::move(corrected.posterior)});
    out.components.push_back(std::move(comp));

    std::size_t pos = 0;
    while (pos < k && ++tuple[pos] == m) tuple[pos++] = 0;
    if (pos == k) break;
  }
  out.log_weight_sum = log_sum_exp(log_w_prime);
  return out;
}

double log_marginal_kde(const LatticePosterior& lp, std::span<const double> ci_logs) {
  return std::accumulate(ci_logs.begin(), ci_logs.end(), 0.0) + lp.log_normaliser;
}

std::vector<ParamVec> sample_lattice_posterior(const LatticePosterior& lp, std::size_t count, RandomStream& rng) {
  const auto& lat = lp.lattice;
  std::vector<double> cumulative(lp.log_density.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    total += std::exp(lp.log_density[i]);
    cumulative[i] = total;
  }
  std::vector<ParamVec> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double u = rng.uniform_open() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    ParamVec x = lat.cell_center(static_cast<std::size_t>(it - cumulative.begin()));
    for (int k = 0; k < lat.dim(); ++k) x[k] += (rng.uniform_open() - 0.5) * lat.width(k);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace pwabc
