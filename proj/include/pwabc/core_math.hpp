#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace pwabc {

/// A point in the (transformed) inference parameter space.
using ParamVec = Eigen::VectorXd;
/// Symmetric positive-definite covariance on the inference scale.
using CovMatrix = Eigen::MatrixXd;

struct GaussianDensity {
  ParamVec mean;
  CovMatrix cov;
};

/// w * K(theta; a, B), with w kept as a log.
struct WeightedGaussian {
  double log_weight = 0.0;
  GaussianDensity component;
};

enum class Norm { L2, LInf };

/// Acceptance region ||z||_p <= epsilon in observation space of dimension dim_u.
struct LpBallSpec {
  Norm p = Norm::LInf;
  double epsilon = 0.0;
  int dim_u = 1;
  bool discrete = false;
};

void validate(const LpBallSpec& spec);

/// Rectangular midpoint lattice. Cells are stored flattened with the last
/// dimension varying fastest.
class Lattice {
 public:
  Lattice() = default;
  Lattice(ParamVec lower, ParamVec upper, std::vector<int> points_per_dim);

  int dim() const noexcept { return static_cast<int>(points_.size()); }
  std::size_t cell_count() const noexcept { return cells_; }
  double cell_volume() const noexcept { return cell_volume_; }
  const ParamVec& lower() const noexcept { return lower_; }
  const ParamVec& upper() const noexcept { return upper_; }
  const std::vector<int>& points_per_dim() const noexcept { return points_; }
  double width(int k) const { return (upper_[k] - lower_[k]) / points_[k]; }

  /// Per-dimension index of a flattened cell.
  std::vector<int> unravel(std::size_t flat) const;
  std::size_t ravel(std::span<const int> index) const;
  ParamVec cell_center(std::size_t flat) const;
  void cell_center(std::size_t flat, ParamVec& out) const;
  /// Coordinate of the i-th midpoint along dimension k.
  double coordinate(int k, int i) const { return lower_[k] + (i + 0.5) * width(k); }

  bool operator==(const Lattice& other) const;

 private:
  ParamVec lower_;
  ParamVec upper_;
  std::vector<int> points_;
  std::size_t cells_ = 0;
  double cell_volume_ = 0.0;
};

/// Cholesky factor of a covariance, with diagonal jitter added when the plain
/// factorisation fails.
struct RegularisedCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  CovMatrix matrix;  // the factorised (possibly jittered) matrix
  double jitter = 0.0;

  double log_det() const;
  Eigen::MatrixXd inverse() const;
};

/// Throws NumericalError when even the jittered matrix is not PD, or when
/// the input is not symmetric.
RegularisedCholesky regularised_cholesky(const CovMatrix& cov);

/// Covariance with jitter applied when needed; identity on healthy input.
CovMatrix regularise(const CovMatrix& cov, double* jitter = nullptr);

/// Prepared Gaussian for repeated evaluation.
class GaussianEvaluator {
 public:
  explicit GaussianEvaluator(const GaussianDensity& g);
  double operator()(const ParamVec& theta) const;
  int dim() const noexcept { return static_cast<int>(mean_.size()); }

 private:
  ParamVec mean_;
  Eigen::MatrixXd lower_;  // L with Sigma = L L^T
  double log_norm_;
};

double gaussian_logpdf(const ParamVec& theta, const GaussianDensity& g);

/// Product of Gaussian densities as a single weighted Gaussian.
WeightedGaussian gaussian_product(std::span<const GaussianDensity> factors);

/// Volume V of the acceptance ball (a count for the discrete, epsilon = 0 case).
double ball_volume(const LpBallSpec& spec);

/// Distance used for ABC acceptance.
template <class A, class B>
double lp_distance(const A& x, const B& y, Norm p) {
  return p == Norm::L2 ? (x - y).norm() : (x - y).cwiseAbs().maxCoeff();
}

double log_sum_exp(std::span<const double> values);

/// log of the midpoint-rule integral of exp(logvals) over the lattice.
double lattice_integral(std::span<const double> logvals, const Lattice& lattice);

double log_factorial(double k);
double log_binomial_pmf(double x, double trials, double p);
double log_poisson_pmf(double x, double mean);
double logit(double p);
double logistic(double x);

}  // namespace pwabc
