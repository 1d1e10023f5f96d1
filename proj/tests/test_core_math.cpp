#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "pwabc/core_math.hpp"
#include "pwabc/error.hpp"
#include "test_support.hpp"

using namespace pwabc;
using pwabc::test::random_spd;
using pwabc::test::random_vec;
using pwabc::test::rel_err;

namespace {

ParamVec vec(std::initializer_list<double> v) {
  ParamVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

GaussianDensity scalar(double mean, double var) {
  return {vec({mean}), Eigen::MatrixXd::Constant(1, 1, var)};
}

}  // namespace

TEST_CASE("gaussian_logpdf hand values") {
  CHECK(gaussian_logpdf(vec({0.0}), scalar(0, 1)) == doctest::Approx(-0.918938533204673).epsilon(1e-14));
  CHECK(gaussian_logpdf(vec({2.0}), scalar(0, 1)) == doctest::Approx(-0.918938533204673 - 2.0).epsilon(1e-14));
  for (int d = 1; d <= 4; ++d) {
    GaussianDensity g{ParamVec::Constant(d, 0.7), Eigen::MatrixXd::Identity(d, d)};
    CHECK(gaussian_logpdf(g.mean, g) == doctest::Approx(-0.5 * d * std::log(2 * std::numbers::pi)));
  }
}

TEST_CASE("gaussian_logpdf stays finite far in the tail") {
  const double v = gaussian_logpdf(vec({1e4}), scalar(0, 1));
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-0.918938533204673 - 0.5e8));
}

TEST_CASE("gaussian_logpdf matches the explicit formula in 3d") {
  std::mt19937_64 rng(5);
  const auto cov = random_spd(3, rng);
  const GaussianDensity g{random_vec(3, rng), cov};
  const ParamVec x = random_vec(3, rng);
  const ParamVec r = x - g.mean;
  const double expected = -0.5 * (3 * std::log(2 * std::numbers::pi) + std::log(cov.determinant()) +
                                  r.dot(cov.inverse() * r));
  CHECK(gaussian_logpdf(x, g) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(GaussianEvaluator(g)(x) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gaussian_logpdf rejects mismatched dimensions") {
  CHECK_THROWS_AS(gaussian_logpdf(vec({0.0, 1.0}), scalar(0, 1)), Error);
}

TEST_CASE("gaussian_product of a single factor is the factor") {
  const auto g = scalar(1.5, 2.0);
  const auto w = gaussian_product(std::vector{g});
  CHECK(w.log_weight == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(w.component.mean[0] == doctest::Approx(1.5));
  CHECK(w.component.cov(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("gaussian_product of N(0,1) and N(2,1)") {
  const auto w = gaussian_product(std::vector{scalar(0, 1), scalar(2, 1)});
  CHECK(w.component.cov(0, 0) == doctest::Approx(0.5));
  CHECK(w.component.mean[0] == doctest::Approx(1.0));
  const double expected = std::exp(-1.0) / (2.0 * std::sqrt(std::numbers::pi));
  CHECK(std::exp(w.log_weight) == doctest::Approx(expected).epsilon(1e-13));
  // Quadrature of the pointwise product over [-10, 12].
  double integral = 0.0;
  const int n = 200000;
  const double h = 22.0 / n;
  for (int i = 0; i < n; ++i) {
    const double t = -10.0 + (i + 0.5) * h;
    integral += std::exp(gaussian_logpdf(vec({t}), scalar(0, 1)) + gaussian_logpdf(vec({t}), scalar(2, 1))) * h;
  }
  CHECK(integral == doctest::Approx(expected).epsilon(1e-9));
  // Convolution form N(2; 0, 2).
  CHECK(w.log_weight == doctest::Approx(gaussian_logpdf(vec({2.0}), scalar(0, 2))).epsilon(1e-13));
}

TEST_CASE("gaussian_product of two standard bivariate normals") {
  const GaussianDensity g{ParamVec::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  const auto w = gaussian_product(std::vector{g, g});
  CHECK(std::exp(w.log_weight) == doctest::Approx(1.0 / (4.0 * std::numbers::pi)).epsilon(1e-13));
  CHECK((w.component.cov - 0.5 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
  CHECK(w.component.mean.norm() < 1e-14);
}

TEST_CASE("gaussian_product pointwise identity on random cases") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 3), count(2, 5);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = dim(rng), n = count(rng);
    std::vector<GaussianDensity> fs;
    for (int i = 0; i < n; ++i) fs.push_back({random_vec(d, rng), random_spd(d, rng)});
    const auto w = gaussian_product(fs);
    for (int t = 0; t < 20; ++t) {
      const ParamVec x = w.component.mean + random_vec(d, rng, 0.5);
      double lhs = 0.0;
      for (const auto& f : fs) lhs += gaussian_logpdf(x, f);
      const double rhs = w.log_weight + gaussian_logpdf(x, w.component);
      CHECK(std::abs(std::expm1(rhs - lhs)) < 1e-10);
    }
  }
}

TEST_CASE("gaussian_product agrees with the pairwise weight formula for two scalar factors") {
  // For n = 2, d = 1 the pairwise form reduces to the density of the mean
  // difference under the summed variance.
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const double m1 = random_vec(1, rng, 3)[0], m2 = random_vec(1, rng, 3)[0];
    const double v1 = 0.1 + std::abs(random_vec(1, rng)[0]), v2 = 0.1 + std::abs(random_vec(1, rng)[0]);
    const auto w = gaussian_product(std::vector{scalar(m1, v1), scalar(m2, v2)});
    const double b = 1.0 / (1.0 / v1 + 1.0 / v2);
    const double pairwise = 0.5 * std::log(b / (2 * std::numbers::pi * v1 * v2)) -
                            0.5 * (m1 - m2) * (m1 - m2) / (v1 * v2) * b;
    CHECK(w.log_weight == doctest::Approx(pairwise).epsilon(1e-12));
  }
}

TEST_CASE("gaussian_product is invariant to factor order") {
  std::mt19937_64 rng(23);
  std::vector<GaussianDensity> fs;
  for (int i = 0; i < 4; ++i) fs.push_back({random_vec(2, rng), random_spd(2, rng)});
  const auto a = gaussian_product(fs);
  std::reverse(fs.begin(), fs.end());
  std::swap(fs[0], fs[2]);
  const auto b = gaussian_product(fs);
  CHECK(std::abs(a.log_weight - b.log_weight) < 1e-12);
  CHECK((a.component.mean - b.component.mean).norm() < 1e-12);
  CHECK((a.component.cov - b.component.cov).norm() < 1e-12);
}

TEST_CASE("gaussian_product names a non-positive-definite factor") {
  const GaussianDensity good{ParamVec::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.0, 0.0, -3.0;
  try {
    gaussian_product(std::vector{good, GaussianDensity{ParamVec::Zero(2), bad}});
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("regularised_cholesky leaves healthy matrices alone and jitters singular ones") {
  Eigen::MatrixXd healthy(2, 2);
  healthy << 2.0, 0.5, 0.5, 1.0;
  double jitter = -1.0;
  const auto same = regularise(healthy, &jitter);
  CHECK(jitter == 0.0);
  CHECK((same - healthy).norm() == 0.0);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 3);
  const auto fixed = regularised_cholesky(ones);
  CHECK(fixed.jitter > 0.0);
  CHECK(fixed.jitter >= 1e-10 * ones.trace() / 3.0);
  CHECK(fixed.llt.info() == Eigen::Success);

  const auto zero = regularised_cholesky(Eigen::MatrixXd::Zero(2, 2));
  CHECK(zero.jitter > 0.0);
  CHECK(zero.matrix.diagonal().minCoeff() > 0.0);
}

TEST_CASE("regularised_cholesky rejects asymmetric input") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 0.2, 0.0, 1.0;
  CHECK_THROWS_AS(regularised_cholesky(m), NumericalError);
}

TEST_CASE("ball_volume") {
  CHECK(ball_volume({Norm::L2, 0.01, 1, false}) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(ball_volume({Norm::LInf, 1.0, 2, false}) == doctest::Approx(4.0));
  CHECK(ball_volume({Norm::L2, 1.0, 2, false}) == doctest::Approx(std::numbers::pi));
  CHECK(ball_volume({Norm::L2, 1.0, 3, false}) == doctest::Approx(4.0 / 3.0 * std::numbers::pi));
  for (int u = 1; u <= 3; ++u) {
    CHECK(ball_volume({Norm::LInf, 0.0, u, true}) == 1.0);
    CHECK(ball_volume({Norm::L2, 0.0, u, true}) == 1.0);
  }
  CHECK(ball_volume({Norm::L2, 0.3, 1, false}) == doctest::Approx(ball_volume({Norm::LInf, 0.3, 1, false})));
  CHECK_THROWS_AS(ball_volume({Norm::LInf, 0.0, 1, false}), ConfigError);
}

TEST_CASE("ball_volume counts lattice points for a discrete ball") {
  CHECK(ball_volume({Norm::LInf, 1.0, 1, true}) == 3.0);
  CHECK(ball_volume({Norm::LInf, 1.0, 2, true}) == 9.0);
  CHECK(ball_volume({Norm::L2, 1.0, 2, true}) == 5.0);
  CHECK(ball_volume({Norm::L2, 1.5, 2, true}) == 9.0);
}

TEST_CASE("log_sum_exp") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(std::vector{0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_sum_exp(std::vector{-1000.0, -1000.0}) == doctest::Approx(-1000.0 + std::log(2.0)));
  CHECK(log_sum_exp(std::vector{0.0, -inf}) == 0.0);
  CHECK(log_sum_exp(std::vector{-inf, -inf}) == -inf);
  CHECK(log_sum_exp(std::vector{3.25}) == 3.25);
}

TEST_CASE("lattice_integral") {
  const Lattice unit(vec({0.0}), vec({1.0}), {100});
  CHECK(lattice_integral(std::vector<double>(100, 0.0), unit) == doctest::Approx(0.0).epsilon(1e-14));

  const Lattice sq(vec({0.0, 0.0}), vec({2.0, 2.0}), {30, 40});
  CHECK(lattice_integral(std::vector<double>(sq.cell_count(), 0.0), sq) == doctest::Approx(std::log(4.0)));

  const Lattice wide(vec({-8.0}), vec({8.0}), {2001});
  std::vector<double> lv(wide.cell_count());
  for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = gaussian_logpdf(wide.cell_center(i), scalar(0, 1));
  CHECK(std::abs(lattice_integral(lv, wide)) < 1e-8);

  CHECK_THROWS(lattice_integral(std::vector<double>(3, 0.0), unit));
}

TEST_CASE("lattice_integral of Gaussians over +-8 sd in two dimensions") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    const auto cov = random_spd(2, rng);
    const GaussianDensity g{random_vec(2, rng), cov};
    const ParamVec sd = cov.diagonal().cwiseSqrt();
    const Lattice lat(g.mean - 8.0 * sd, g.mean + 8.0 * sd, {300, 300});
    std::vector<double> lv(lat.cell_count());
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = gaussian_logpdf(lat.cell_center(i), g);
    CHECK(std::abs(lattice_integral(lv, lat)) < 1e-6);
  }
}

TEST_CASE("Lattice indexing") {
  const Lattice lat(vec({-1.0, 0.0, 10.0}), vec({1.0, 3.0, 11.0}), {4, 3, 5});
  CHECK(lat.cell_count() == 60);
  CHECK(lat.cell_volume() == doctest::Approx(0.5 * 1.0 * 0.2));
  for (std::size_t i = 0; i < lat.cell_count(); ++i) CHECK(lat.ravel(lat.unravel(i)) == i);
  const auto idx = lat.unravel(1);
  CHECK(idx == std::vector<int>{0, 0, 1});  // last dimension fastest
  const auto c = lat.cell_center(lat.ravel(std::vector<int>{3, 2, 4}));
  CHECK(c[0] == doctest::Approx(0.75));
  CHECK(c[1] == doctest::Approx(2.5));
  CHECK(c[2] == doctest::Approx(10.9));
  CHECK_THROWS_AS(Lattice(vec({1.0}), vec({0.0}), {10}), ConfigError);
  CHECK_THROWS_AS(Lattice(vec({0.0}), vec({1.0}), {0}), ConfigError);
}

TEST_CASE("log pmf helpers") {
  // Direct log-factorial evaluation; the quoted -2.515 is a rounded figure.
  const double direct = std::lgamma(101.0) - std::lgamma(61.0) - std::lgamma(41.0) + 60 * std::log(0.6) + 40 * std::log(0.4);
  CHECK(log_binomial_pmf(60, 100, 0.6) == doctest::Approx(direct).epsilon(1e-13));
  CHECK(std::abs(log_binomial_pmf(60, 100, 0.6) - -2.515) < 5e-3);
  CHECK(log_poisson_pmf(2, 1.0) == doctest::Approx(std::log(std::exp(-1.0) / 2.0)));
  CHECK(log_binomial_pmf(0, 10, 0.0) == 0.0);
  CHECK(log_binomial_pmf(1, 10, 0.0) == -std::numeric_limits<double>::infinity());
  CHECK(log_poisson_pmf(0, 0.0) == 0.0);
  CHECK(logistic(logit(0.3)) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(log_factorial(5) == doctest::Approx(std::log(120.0)));
}
