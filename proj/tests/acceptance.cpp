// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pwabc/error.hpp"
#include "pwabc/oracle.hpp"
#include "pwabc/pipeline.hpp"
#include "pwabc/report.hpp"

namespace fs = std::filesystem;
using namespace pwabc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int hardware_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

RunConfig config(const std::string& name) {
  return load_run_config((fs::path(PWABC_SOURCE_DIR) / "configs" / (name + ".json")).string());
}

ParamVec scalar(double v) { return ParamVec::Constant(1, v); }

Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
  Eigen::MatrixXd s = scale * (a * a.transpose() / d + 0.3 * Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (s + s.transpose());
}

ParamVec random_vec(int d, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  ParamVec v(d);
  for (int k = 0; k < d; ++k) v[k] = normal(rng);
  return v;
}

/// Kernel, Gaussian and exact posteriors evaluated on one comparison lattice.
struct Comparison {
  LatticePosterior exact, kernel, gaussian;
  double log_marginal_true = 0.0;
};

/// The oracle fixes the comparison lattice: its own zoomed bounds, with
/// `points` per dimension. The kernel posterior is evaluated there directly.
Comparison compare_on_oracle(const RunConfig& cfg, const Dataset& data, const InferResult& result, int points) {
  Comparison c;
  const auto oracle = run_oracle(cfg, data);
  c.log_marginal_true = oracle.log_marginal_true;
  const int d = cfg.model.param_dim();
  const Lattice lattice(oracle.posterior.lattice.lower(), oracle.posterior.lattice.upper(),
                        std::vector<int>(static_cast<std::size_t>(d), points));
  c.exact = lattice == oracle.posterior.lattice
                ? oracle.posterior
                : exact_posterior_lattice(cfg.model, cfg.prior, data, lattice, cfg.oracle.include_first, cfg.abc.workers)
                      .posterior;
  c.kernel = evaluate_on_lattice(lattice, kde_log_target(result.kde_factors, cfg.prior), cfg.abc.workers);
  c.gaussian = gaussian_posterior_on_lattice(*result.gaussian, lattice);
  return c;
}

// ---------------------------------------------------------------------------

Outcome gaussian_product_identity() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dim(1, 3), count(1, 5);
  double worst = 0.0;
  for (int rep = 0; rep < 500; ++rep) {
    const int d = dim(rng), n = count(rng);
    std::vector<GaussianDensity> fs;
    for (int i = 0; i < n; ++i) fs.push_back({random_vec(d, rng, 1.0), random_spd(d, rng, 0.5 + rep % 3)});
    const auto prod = gaussian_product(fs);
    for (int t = 0; t < 5; ++t) {
      const ParamVec theta = prod.component.mean + random_vec(d, rng, 1.0);
      double direct = 0.0;
      for (const auto& f : fs) direct += gaussian_logpdf(theta, f);
      const double via = prod.log_weight + gaussian_logpdf(theta, prod.component);
      worst = std::max(worst, std::abs(std::expm1(via - direct)));
    }
  }
  return {worst <= 1e-10, fmt("500 cases x 5 points, max relative error %.2e (limit 1e-10)", worst)};
}

Outcome mixture_lattice_equivalence() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 2), obs(2, 4), draws(3, 10);
  double worst_point = 0.0, worst_sum = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int d = dim(rng), n = obs(rng), m = draws(rng);
    std::vector<KDEFactor> fs;
    for (int i = 0; i < n - 1; ++i) {
      FactorSampleSet set;
      set.factor_index = i + 2;
      set.samples.resize(m, d);
      const ParamVec centre = random_vec(d, rng, 0.3);
      for (int j = 0; j < m; ++j) set.samples.row(j) = (centre + random_vec(d, rng, 0.7)).transpose();
      set.total_draws = m;
      fs.push_back(fit_kde_factor(set));
    }
    const auto prior = PriorSpec::gaussian(random_vec(d, rng, 0.5), ParamVec::Constant(d, 3.0));
    const auto mix = mixture_product_exact(fs, prior);

    // Lattice over the mixture posterior: +-10 sd of its widest component spread.
    ParamVec lo = ParamVec::Constant(d, INFINITY), hi = ParamVec::Constant(d, -INFINITY);
    for (const auto& c : mix.posterior) {
      const ParamVec sd = c.component.cov.diagonal().cwiseSqrt();
      lo = lo.cwiseMin(c.component.mean - 10.0 * sd);
      hi = hi.cwiseMax(c.component.mean + 10.0 * sd);
    }
    const Lattice lattice(lo, hi, std::vector<int>(static_cast<std::size_t>(d), d == 1 ? 4000 : 500));
    const auto lp = assemble_lattice_posterior(std::span<const KDEFactor>(fs), prior, lattice);
    worst_sum = std::max(worst_sum, std::abs(std::expm1(mix.log_weight_sum - lp.log_normaliser)));
    const double peak = *std::max_element(lp.log_density.begin(), lp.log_density.end());
    for (std::size_t i = 0; i < lattice.cell_count(); i += 97) {
      if (lp.log_density[i] < peak - 20.0) continue;
      worst_point = std::max(worst_point, std::abs(std::expm1(mix.log_posterior_pdf(lattice.cell_center(i)) - lp.log_density[i])));
    }
  }
  return {worst_point <= 1e-6 && worst_sum <= 1e-6,
          fmt("50 cases, pointwise max %.2e, sum of weights vs lattice integral max %.2e (limit 1e-6)", worst_point, worst_sum)};
}

Outcome binomial_ci() {
  const ModelSpec model{BinomialModel{}};
  const auto prior = PriorSpec::gaussian(scalar(0.0), scalar(3.0));
  const auto data = simulate_dataset(model, scalar(logit(0.6)), 21, 1.0, StateVec::Zero(1), 99);
  ABCConfig cfg;
  cfg.m = 2000;
  cfg.seed = 31;
  cfg.ball = LpBallSpec{Norm::LInf, 0.0, 1, true};
  cfg.workers = hardware_workers();
  const auto factors = sample_all_factors(model, prior, data, cfg);
  int inside = 0;
  using boost::math::quadrature::gauss_kronrod;
  for (const auto& f : factors) {
    const double x = f.to.state[0];
    const double truth = gauss_kronrod<double, 61>::integrate(
        [&](double t) { return std::exp(prior.logpdf(scalar(t)) + log_binomial_pmf(x, 100, logistic(t))); }, -15.0, 15.0, 15,
        1e-12);
    const double est = std::exp(estimate_ci(f, cfg.ball));
    const double se = truth * std::sqrt((1.0 - truth) / cfg.m);
    inside += std::abs(est - truth) <= 3.0 * se;
  }
  return {inside >= 18, fmt("%d/20 estimates within 3 SE of quadrature (need 18)", inside)};
}

Outcome binomial_end_to_end() {
  auto cfg = config("binomial");
  cfg.abc.workers = hardware_workers();
  const auto data = simulate_from_config(cfg);
  const auto result = run_inference(cfg, data);
  const auto c = compare_on_oracle(cfg, data, result, 2 * default_points_per_dim(1));
  const double tv = divergence(c.exact, c.kernel).tv;
  const double gap_k = std::abs(*result.log_marginal_kde - c.log_marginal_true);
  const double gap_g = std::abs(*result.log_marginal_gaussian - c.log_marginal_true);
  return {tv <= 0.05 && gap_k <= 0.3 && gap_g <= 0.3,
          fmt("tv(kernel) %.4f (<= 0.05); log marginals exact %.3f, kernel %.3f (gap %.3f), gaussian %.3f (gap %.3f) (<= 0.3)",
              tv, c.log_marginal_true, *result.log_marginal_kde, gap_k, *result.log_marginal_gaussian, gap_g)};
}

Outcome cir_end_to_end() {
  auto cfg = config("cir");
  cfg.abc.workers = hardware_workers();
  const auto data = simulate_from_config(cfg);
  const auto result = run_inference(cfg, data);
  const auto c = compare_on_oracle(cfg, data, result, 2 * default_points_per_dim(1));
  const double tv_k = divergence(c.exact, c.kernel).tv;
  const double tv_g = divergence(c.exact, c.gaussian).tv;
  const double err_k = std::abs(*result.log_marginal_kde - c.log_marginal_true);
  const double err_g = std::abs(*result.log_marginal_gaussian - c.log_marginal_true);
  const double acc = result.report.mean_acceptance();
  const bool pass = tv_k <= 0.1 && tv_k < tv_g && err_k < err_g && acc >= 0.005 && acc <= 0.05;
  return {pass, fmt("tv kernel %.4f (<= 0.1), gaussian %.4f; log marginal exact %.3f, kernel %.3f, gaussian %.3f; "
                    "mean acceptance %.2f%% (0.5%%-5%%)",
                    tv_k, tv_g, c.log_marginal_true, *result.log_marginal_kde, *result.log_marginal_gaussian, 100 * acc)};
}

Outcome inar_end_to_end() {
  auto cfg = config("inar1");
  cfg.abc.workers = hardware_workers();
  const auto data = simulate_from_config(cfg);
  const auto result = run_inference(cfg, data);
  const auto c = compare_on_oracle(cfg, data, result, 200);
  const double tv = divergence(c.exact, c.kernel).tv;
  const double err_k = std::abs(*result.log_marginal_kde - c.log_marginal_true);
  const double err_g = std::abs(*result.log_marginal_gaussian - c.log_marginal_true);
  const double acc = result.report.mean_acceptance();
  const bool pass = tv <= 0.1 && err_g >= 5.0 * err_k && acc >= 0.03 && acc <= 0.20;
  return {pass, fmt("tv(kernel) %.4f (<= 0.1); log marginal exact %.2f, kernel %.2f (err %.2f), gaussian %.2f "
                    "(err %.2f, ratio %.1f, need >= 5); mean acceptance %.1f%% (3%%-20%%)",
                    tv, c.log_marginal_true, *result.log_marginal_kde, err_k, *result.log_marginal_gaussian, err_g,
                    err_g / err_k, 100 * acc)};
}

Outcome lotka_volterra() {
  auto cfg = config("lotka_volterra");
  cfg.abc.workers = hardware_workers();
  const auto data = simulate_from_config(cfg);
  const auto result = run_inference(cfg, data);
  const auto& kernel = *result.kde_lattice;
  const auto& gauss = *result.gaussian_lattice;
  const ParamVec mk = lattice_mode(kernel), mg = lattice_mode(gauss);
  const double mode_gap = (mk - mg).cwiseAbs().maxCoeff();
  const ParamVec truth = cfg.model.to_inference(*cfg.true_params);
  int inside_k = 0, inside_g = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      inside_k += inside_hpd(marginal_2d(kernel, i, j), truth[i], truth[j], 0.95);
      inside_g += inside_hpd(marginal_2d(gauss, i, j), truth[i], truth[j], 0.95);
    }
  return {mode_gap <= 0.5 && inside_k >= 2 && inside_g >= 2,
          fmt("mode gap %.3f (<= 0.5); truth inside 95%% region: kernel %d/3, gaussian %d/3 (need 2); "
              "mean acceptance %.3g%%",
              mode_gap, inside_k, inside_g, 100 * result.report.mean_acceptance())};
}

Outcome mise_shrinkage() {
  const Lattice grid(scalar(-8.0), scalar(8.0), {1600});
  double previous = INFINITY;
  std::string detail = "median ISE";
  bool pass = true;
  for (int m : {100, 1000, 10000}) {
    std::vector<double> ise;
    for (int rep = 0; rep < 20; ++rep) {
      std::mt19937_64 rng(1000 * m + rep);
      std::normal_distribution<double> normal;
      FactorSampleSet set;
      set.samples.resize(m, 1);
      for (int j = 0; j < m; ++j) set.samples(j, 0) = normal(rng);
      set.total_draws = m;
      const auto f = fit_kde_factor(set);
      double s = 0.0;
      std::vector<double> scratch(static_cast<std::size_t>(m));
      for (std::size_t i = 0; i < grid.cell_count(); ++i) {
        const ParamVec x = grid.cell_center(i);
        const double diff = std::exp(f.logpdf(x, scratch)) - std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2 * std::numbers::pi);
        s += diff * diff * grid.cell_volume();
      }
      ise.push_back(s);
    }
    std::nth_element(ise.begin(), ise.begin() + 10, ise.end());
    const double hi = ise[10];
    std::nth_element(ise.begin(), ise.begin() + 9, ise.begin() + 10);
    const double median = 0.5 * (ise[9] + hi);
    pass = pass && median < previous;
    previous = median;
    detail += fmt(" m=%d: %.3e", m, median);
  }
  return {pass, detail + " (strictly decreasing)"};
}

std::vector<std::string> files_under(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "pwabc_acceptance_determinism";
  fs::remove_all(base);
  int compared = 0, differing = 0;
  for (const char* name : {"binomial", "cir"}) {
    auto cfg = config(name);
    const auto data = simulate_from_config(cfg);
    std::vector<fs::path> dirs;
    for (int workers : {1, 3}) {
      auto run = cfg;
      run.abc.workers = workers;
      const auto dir = base / (std::string(name) + "_w" + std::to_string(workers));
      prepare_output_dir(dir, true);
      write_infer_artifacts(cfg, data, run_inference(run, data), dir);
      dirs.push_back(dir);
    }
    const auto a = files_under(dirs[0]);
    if (a != files_under(dirs[1])) ++differing;
    for (const auto& f : a) {
      if (f == "run_report.json") continue;
      ++compared;
      differing += slurp(dirs[0] / f) != slurp(dirs[1] / f);
    }
  }
  fs::remove_all(base);
  return {differing == 0 && compared > 0,
          fmt("binomial and CIR runs at 1 and 3 workers: %d artifact files compared, %d differ", compared, differing)};
}

Outcome ebc() {
  const auto inar_data = simulate_from_config(config("inar1"));
  bool capped = false;
  std::int64_t draws = 0;
  try {
    ebc_sample(ModelSpec(Inar1Model{}), PriorSpec::gaussian(ParamVec::Zero(2), ParamVec::Constant(2, 3.0)), inar_data, 1,
               1'000'000, 5);
  } catch (const CappedOutError& e) {
    capped = true;
    draws = e.draws();
  }

  const ModelSpec model{BinomialModel{}};
  const auto prior = PriorSpec::gaussian(scalar(0.0), scalar(3.0));
  const auto data = simulate_dataset(model, scalar(logit(0.6)), 2, 1.0, StateVec::Zero(1), 77);
  const auto sample = ebc_sample(model, prior, data, 2000, 100'000'000, 9);
  const Lattice lattice(scalar(-3.0), scalar(4.0), {70000});
  const auto oracle = exact_posterior_lattice(model, prior, data, lattice, true);
  std::vector<double> cdf(lattice.cell_count() + 1, 0.0);
  for (std::size_t i = 0; i < lattice.cell_count(); ++i)
    cdf[i + 1] = cdf[i] + std::exp(oracle.posterior.log_density[i]) * lattice.cell_volume();
  std::vector<double> s(sample.samples.col(0).begin(), sample.samples.col(0).end());
  std::sort(s.begin(), s.end());
  const double n = double(s.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = std::clamp((s[i] - lattice.lower()[0]) / lattice.width(0), 0.0, double(lattice.cell_count()) - 1e-9);
    const auto k = static_cast<std::size_t>(u);
    const double f = cdf[k] + (u - double(k)) * (cdf[k + 1] - cdf[k]);
    ks = std::max({ks, std::abs(f - double(i) / n), std::abs(double(i + 1) / n - f)});
  }
  const double critical = 1.628 / std::sqrt(n);
  return {capped && ks < critical,
          fmt("INAR n=100: %s after %lld draws; binomial n=2: KS %.4f vs 1%% critical %.4f (acceptance %.3g)",
              capped ? "capped out" : "NOT capped", static_cast<long long>(draws), ks, critical, sample.acceptance_rate())};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0;
  auto report = [&](int id, const char* name, double limit_seconds, const std::function<Outcome()>& body) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = limit_seconds <= 0 || secs < limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s [%d] %s: %s; %.1f s", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    if (limit_seconds > 0) std::printf(" (limit %.0f s%s)", limit_seconds, in_time ? "" : ", exceeded");
    std::printf("\n");
    std::fflush(stdout);
  };

  std::printf("workers: %d\n", hardware_workers());
  report(1, "Gaussian product identity", 10, gaussian_product_identity);
  report(2, "exact mixture vs lattice posterior", 120, mixture_lattice_equivalence);
  report(3, "binomial c_i vs quadrature", 60, binomial_ci);
  report(4, "binomial end-to-end", 120, binomial_end_to_end);
  report(5, "CIR end-to-end", 600, cir_end_to_end);
  report(6, "INAR(1) end-to-end", 900, inar_end_to_end);
  report(7, "Lotka-Volterra reduced design", 3600, lotka_volterra);
  report(8, "KDE MISE shrinkage", 60, mise_shrinkage);
  report(9, "determinism across worker counts", 0, determinism);
  report(10, "EBC infeasibility and n=2 feasibility", 60, ebc);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
