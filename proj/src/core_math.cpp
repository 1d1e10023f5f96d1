#include "pwabc/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pwabc/error.hpp"

namespace pwabc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSymmetryTol = 1e-12;
constexpr int kMaxJitterRounds = 12;

void require_symmetric(const CovMatrix& m) {
  if (m.rows() != m.cols()) throw NumericalError("covariance is not square");
  const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
    throw NumericalError("covariance is not symmetric");
}

}  // namespace

void validate(const LpBallSpec& spec) {
  if (!(spec.epsilon >= 0.0) || !std::isfinite(spec.epsilon))
    throw ConfigError("tolerance epsilon must be a finite non-negative number");
  if (spec.dim_u < 1) throw ConfigError("observation dimension must be positive");
  if (spec.epsilon == 0.0 && !spec.discrete)
    throw ConfigError("epsilon = 0 gives a measure-zero acceptance set for continuous data");
}

Lattice::Lattice(ParamVec lower, ParamVec upper, std::vector<int> points_per_dim)
    : lower_(std::move(lower)), upper_(std::move(upper)), points_(std::move(points_per_dim)) {
  if (lower_.size() != upper_.size() || lower_.size() != static_cast<Eigen::Index>(points_.size()) ||
      points_.empty())
    throw ConfigError("lattice bounds and point counts must share one dimension");
  cells_ = 1;
  cell_volume_ = 1.0;
  for (int k = 0; k < dim(); ++k) {
    if (!(lower_[k] < upper_[k]) || !std::isfinite(lower_[k]) || !std::isfinite(upper_[k]))
      throw ConfigError("lattice lower bound must be below upper bound in every dimension");
    if (points_[k] < 1) throw ConfigError("lattice needs at least one point per dimension");
    cells_ *= static_cast<std::size_t>(points_[k]);
    cell_volume_ *= width(k);
  }
  if (!(cell_volume_ > 0.0)) throw ConfigError("lattice cell volume underflows");
}

std::vector<int> Lattice::unravel(std::size_t flat) const {
  std::vector<int> idx(points_.size());
  for (int k = dim() - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(flat % static_cast<std::size_t>(points_[k]));
    flat /= static_cast<std::size_t>(points_[k]);
  }
  return idx;
}

std::size_t Lattice::ravel(std::span<const int> index) const {
  std::size_t flat = 0;
  for (int k = 0; k < dim(); ++k) flat = flat * static_cast<std::size_t>(points_[k]) + index[k];
  return flat;
}

ParamVec Lattice::cell_center(std::size_t flat) const {
  ParamVec out(dim());
  cell_center(flat, out);
  return out;
}

void Lattice::cell_center(std::size_t flat, ParamVec& out) const {
  for (int k = dim() - 1; k >= 0; --k) {
    const auto n = static_cast<std::size_t>(points_[k]);
    out[k] = coordinate(k, static_cast<int>(flat % n));
    flat /= n;
  }
}

bool Lattice::operator==(const Lattice& other) const {
  return points_ == other.points_ && lower_ == other.lower_ && upper_ == other.upper_;
}

double RegularisedCholesky::log_det() const {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Eigen::MatrixXd RegularisedCholesky::inverse() const {
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(matrix.rows(), matrix.cols()));
  return 0.5 * (inv + inv.transpose());
}

RegularisedCholesky regularised_cholesky(const CovMatrix& cov) {
  require_symmetric(cov);
  if (!cov.allFinite()) throw NumericalError("covariance has non-finite entries");
  RegularisedCholesky out;
  out.matrix = cov;
  out.llt.compute(out.matrix);
  if (out.llt.info() == Eigen::Success) return out;

  // Only near-singular matrices are rescued; a clearly negative eigenvalue is an error.
  const double scale = cov.cwiseAbs().maxCoeff();
  if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues()[0] < -1e-6 * scale)
    throw NumericalError("covariance is not positive semi-definite");
  const auto d = static_cast<double>(cov.rows());
  double lambda = 1e-10 * cov.trace() / d;
  if (!(lambda > 0.0)) lambda = 1e-10;
  for (int round = 0; round < kMaxJitterRounds; ++round, lambda *= 10.0) {
    out.matrix = cov;
    out.matrix.diagonal().array() += lambda;
    out.llt.compute(out.matrix);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = lambda;
      return out;
    }
  }
  throw NumericalError("covariance is not positive definite after regularisation");
}

CovMatrix regularise(const CovMatrix& cov, double* jitter) {
  auto chol = regularised_cholesky(cov);
  if (jitter) *jitter = chol.jitter;
  return chol.matrix;
}

GaussianEvaluator::GaussianEvaluator(const GaussianDensity& g) : mean_(g.mean) {
  if (g.cov.rows() != g.mean.size()) throw NumericalError("mean and covariance dimensions differ");
  auto chol = regularised_cholesky(g.cov);
  lower_ = chol.llt.matrixL();
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + chol.log_det());
}

double GaussianEvaluator::operator()(const ParamVec& theta) const {
  if (theta.size() != mean_.size()) throw NumericalError("dimension mismatch in Gaussian density");
  const Eigen::VectorXd z =
      lower_.triangularView<Eigen::Lower>().solve(theta - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double gaussian_logpdf(const ParamVec& theta, const GaussianDensity& g) {
  return GaussianEvaluator(g)(theta);
}

WeightedGaussian gaussian_product(std::span<const GaussianDensity> factors) {
  if (factors.empty()) throw NumericalError("gaussian_product needs at least one factor");
  const auto d = factors.front().mean.size();

  std::vector<Eigen::MatrixXd> precisions;
  precisions.reserve(factors.size());
  Eigen::MatrixXd precision_sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
  double log_det_sum = 0.0;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& f = factors[i];
    if (f.mean.size() != d || f.cov.rows() != d || f.cov.cols() != d)
      throw NumericalError("gaussian_product: factor " + std::to_string(i) +
                           " has a different dimension");
    RegularisedCholesky chol;
    try {
      chol = regularised_cholesky(f.cov);
    } catch (const NumericalError& e) {
      throw NumericalError("gaussian_product: factor " + std::to_string(i) + ": " + e.what());
    }
    precisions.push_back(chol.inverse());
    precision_sum += precisions.back();
    shift += precisions.back() * f.mean;
    log_det_sum += chol.log_det();
  }

  Eigen::LLT<Eigen::MatrixXd> sum_llt(precision_sum);
  if (sum_llt.info() != Eigen::Success)
    throw NumericalError("gaussian_product: summed precision is singular");
  Eigen::MatrixXd cov = sum_llt.solve(Eigen::MatrixXd::Identity(d, d));
  cov = 0.5 * (cov + cov.transpose());
  Eigen::VectorXd mean = sum_llt.solve(shift);

  // Completed square: sum_i mu_i' P_i mu_i - a' B^-1 a == sum_i (mu_i - a)' P_i (mu_i - a).
  double quad = 0.0;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const Eigen::VectorXd r = factors[i].mean - mean;
    quad += r.dot(precisions[i] * r);
  }
  const double dd = static_cast<double>(d);
  const double n = static_cast<double>(factors.size());
  double log_det_b = 0.0;
  {
    const auto& l = sum_llt.matrixLLT();
    for (Eigen::Index i = 0; i < d; ++i) log_det_b -= 2.0 * std::log(l(i, i));
  }
  WeightedGaussian out;
  out.log_weight = 0.5 * (dd * kLog2Pi + log_det_b) - 0.5 * (n * dd * kLog2Pi + log_det_sum) - 0.5 * quad;
  out.component = GaussianDensity{std::move(mean), std::move(cov)};
  return out;
}

double ball_volume(const LpBallSpec& spec) {
  validate(spec);
  const int u = spec.dim_u;
  const double eps = spec.epsilon;
  if (spec.discrete) {
    // Count integer points in the ball.
    const int r = static_cast<int>(std::floor(eps));
    if (spec.p == Norm::LInf) return std::pow(2.0 * r + 1.0, u);
    double count = 0.0;
    std::vector<int> z(u, -r);
    while (true) {
      double s = 0.0;
      for (int v : z) s += static_cast<double>(v) * v;
      if (s <= eps * eps) count += 1.0;
      int k = 0;
      while (k < u && ++z[k] > r) z[k++] = -r;
      if (k == u) break;
    }
    return count;
  }
  if (spec.p == Norm::LInf) return std::pow(2.0 * eps, u);
  const double du = u;
  return std::pow(std::numbers::pi, du / 2.0) * std::pow(eps, du) / std::tgamma(du / 2.0 + 1.0);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw NumericalError("log_sum_exp of an empty list");
  const double mx = *std::max_element(values.begin(), values.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  if (values.size() == 1) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

double lattice_integral(std::span<const double> logvals, const Lattice& lattice) {
  if (logvals.size() != lattice.cell_count())
    throw NumericalError("lattice_integral: value grid does not match the lattice");
  return log_sum_exp(logvals) + std::log(lattice.cell_volume());
}

double log_factorial(double k) { return std::lgamma(k + 1.0); }

double log_binomial_pmf(double x, double trials, double p) {
  if (x < 0 || x > trials) return -std::numeric_limits<double>::infinity();
  const double c = log_factorial(trials) - log_factorial(x) - log_factorial(trials - x);
  const double a = x > 0 ? x * std::log(p) : 0.0;
  const double b = trials - x > 0 ? (trials - x) * std::log1p(-p) : 0.0;
  return c + a + b;
}

double log_poisson_pmf(double x, double mean) {
  if (x < 0) return -std::numeric_limits<double>::infinity();
  if (mean == 0.0) return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return x * std::log(mean) - mean - log_factorial(x);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace pwabc
