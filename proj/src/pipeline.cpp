#include "pwabc/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pwabc/dataset_io.hpp"
#include "pwabc/error.hpp"
#include "pwabc/report.hpp"

namespace pwabc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json vector_json(const ParamVec& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

std::string theta_header(int d) {
  std::string h;
  for (int k = 1; k <= d; ++k) h += (k > 1 ? ",theta_" : "theta_") + std::to_string(k);
  return h;
}

std::string rows_csv(int d, const std::vector<ParamVec>& rows) {
  std::string out = theta_header(d) + "\n";
  for (const auto& r : rows) {
    for (int k = 0; k < d; ++k) {
      if (k) out += ',';
      out += format_real(r[k]);
    }
    out += '\n';
  }
  return out;
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string out = theta_header(static_cast<int>(m.cols())) + "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_real(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, int d) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty sample file " + path.string());
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    int count = 0;
    while (std::getline(cells, cell, ',')) {
      values.push_back(parse_real(cell));
      ++count;
    }
    if (count != d) throw ConfigError("wrong column count in " + path.string());
    ++rows;
  }
  Eigen::MatrixXd m(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = values[static_cast<std::size_t>(r * d + c)];
  return m;
}

std::string factor_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "factor_%03d.csv", index);
  return buf;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_model_match(const RunConfig& cfg, const Dataset& data) {
  if (!data.model_id.empty() && data.model_id != to_string(cfg.model.id()))
    throw ConfigError("dataset was generated by model '" + data.model_id + "' but the config names '" +
                      std::string(to_string(cfg.model.id())) + "'");
}

int lattice_points(const RunConfig& cfg) {
  return cfg.estimator.lattice.points_per_dim.value_or(default_points_per_dim(cfg.model.param_dim()));
}

}  // namespace

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw ConfigError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

Dataset simulate_from_config(const RunConfig& cfg) {
  if (!cfg.true_params) throw ConfigError("simulation needs model.true_params");
  if (cfg.n < 1) throw ConfigError("simulation needs model.n");
  StateVec x0 = StateVec::Zero(cfg.model.obs_dim());
  if (cfg.x0) {
    x0 = *cfg.x0;
  } else if (!cfg.model.iid()) {
    throw ConfigError("simulation of a Markov model needs model.x0");
  }
  const auto theta = cfg.model.to_inference(*cfg.true_params);
  return simulate_dataset(cfg.model, theta, cfg.n, cfg.dt, x0, cfg.data_seed.value_or(cfg.abc.seed));
}

LatticePosterior inference_lattice(const RunConfig& cfg, std::span<const FactorSampleSet> factors,
                                   const std::function<double(const ParamVec&)>& log_g) {
  const int d = cfg.model.param_dim();
  const int points = lattice_points(cfg);
  const auto& over = cfg.estimator.lattice;
  if (over.lower) {
    const Lattice lattice(*over.lower, *over.upper, std::vector<int>(static_cast<std::size_t>(d), points));
    return evaluate_on_lattice(lattice, log_g, cfg.abc.workers);
  }
  return auto_lattice_posterior(default_lattice(factors, cfg.prior, points), log_g, cfg.abc.workers);
}

void assemble_estimators(const RunConfig& cfg, InferResult& result) {
  const auto& factors = result.factors;
  const int d = cfg.model.param_dim();
  const auto backend = cfg.estimator.backend;
  if (backend != Backend::Gaussian && d > 3) default_points_per_dim(d);  // refuses with a clear error

  result.log_ci.clear();
  for (const auto& fs : factors) result.log_ci.push_back(estimate_ci(fs, cfg.abc.ball));

  if (backend != Backend::Kde) {
    result.gaussian_factors.clear();
    for (const auto& fs : factors) {
      result.gaussian_factors.push_back(fit_gaussian_factor(fs));
      if (result.gaussian_factors.back().jitter > 0)
        result.warnings.push_back("factor " + std::to_string(fs.factor_index) +
                                  ": degenerate sample covariance regularised; m is probably too small");
    }
    result.gaussian = assemble_gaussian_posterior(result.gaussian_factors, cfg.prior);
    result.log_marginal_gaussian = log_marginal_gaussian(*result.gaussian, result.log_ci);
    if (result.gaussian->truncated && result.gaussian->truncation_mass < 0.99)
      result.warnings.push_back("Gaussian posterior keeps only " + format_real(result.gaussian->truncation_mass) +
                                " of its mass inside the prior box");
  }

  if (backend != Backend::Gaussian) {
    result.kde_factors.clear();
    for (const auto& fs : factors) result.kde_factors.push_back(fit_kde_factor(fs, cfg.estimator.q));
    result.kde_lattice = inference_lattice(cfg, factors, kde_log_target(result.kde_factors, cfg.prior));
    result.log_marginal_kde = log_marginal_kde(*result.kde_lattice, result.log_ci);
  }

  if (result.gaussian && d <= 3) {
    const GaussianPosterior& gp = *result.gaussian;
    const GaussianEvaluator eval(GaussianDensity{gp.mean, gp.cov});
    auto log_g = [&gp, &eval](const ParamVec& theta) {
      if (gp.truncated && !std::isfinite(gp.prior.logpdf(theta))) return -std::numeric_limits<double>::infinity();
      return eval(theta);
    };
    std::optional<LatticePosterior> shared;
    if (result.kde_lattice) {
      try {
        shared = evaluate_on_lattice(result.kde_lattice->lattice, log_g, cfg.abc.workers);
      } catch (const NumericalError&) {
        result.warnings.push_back("Gaussian posterior has no mass on the kernel lattice; using its own lattice");
      }
    }
    result.gaussian_lattice = shared ? std::move(*shared) : inference_lattice(cfg, factors, log_g);
  }

  const auto count = static_cast<std::size_t>(cfg.estimator.posterior_samples);
  if (count > 0) {
    if (result.gaussian) {
      RandomStream rng(cfg.abc.seed, streams::kPosterior, 1);
      result.gaussian_samples = sample_gaussian_posterior(*result.gaussian, count, rng);
    }
    if (result.kde_lattice) {
      RandomStream rng(cfg.abc.seed, streams::kPosterior, 2);
      result.kde_samples = sample_lattice_posterior(*result.kde_lattice, count, rng);
    }
  }
}

InferResult run_inference(const RunConfig& cfg, const Dataset& data) {
  require_model_match(cfg, data);
  const auto start = std::chrono::steady_clock::now();
  InferResult result;
  result.workers = cfg.abc.workers;
  result.factors = sample_all_factors(cfg.model, cfg.prior, data, cfg.abc, &result.report);
  assemble_estimators(cfg, result);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_infer_artifacts(const RunConfig& cfg, const Dataset& data, const InferResult& result, const fs::path& dir) {
  const int d = cfg.model.param_dim();
  write_text(dir / "config.json", to_json_text(cfg));
  fs::create_directories(dir / "factors");

  json abc;
  abc["seed"] = cfg.abc.seed;
  abc["m"] = cfg.abc.m;
  abc["epsilon"] = cfg.abc.ball.epsilon;
  abc["p"] = cfg.abc.ball.p == Norm::L2 ? "2" : "inf";
  abc["ball_volume"] = ball_volume(cfg.abc.ball);
  abc["n"] = data.size();
  json factors = json::array();
  for (std::size_t i = 0; i < result.factors.size(); ++i) {
    const auto& fs = result.factors[i];
    write_text(dir / "factors" / factor_file(fs.factor_index), matrix_csv(fs.samples));
    json f;
    f["index"] = fs.factor_index;
    f["file"] = "factors/" + factor_file(fs.factor_index);
    f["total_draws"] = fs.total_draws;
    f["runaway_draws"] = fs.runaway_draws;
    f["acceptance"] = fs.acceptance_rate();
    f["log_ci"] = result.log_ci.at(i);
    factors.push_back(f);
  }
  abc["factors"] = factors;
  abc["config"] = json::parse(to_json_text(cfg));
  write_json(dir / "abc_run.json", abc);

  if (result.gaussian) {
    const auto& gp = *result.gaussian;
    json g;
    g["mu_post"] = vector_json(gp.mean);
    g["sigma_post"] = matrix_json(gp.cov);
    g["log_marginal"] = *result.log_marginal_gaussian;
    g["truncated"] = gp.truncated;
    g["truncation_mass"] = gp.truncation_mass;
    g["product"] = {{"a", vector_json(gp.product.component.mean)},
                    {"B", matrix_json(gp.product.component.cov)},
                    {"log_w", gp.product.log_weight}};
    json per = json::array();
    for (std::size_t i = 0; i < result.gaussian_factors.size(); ++i) {
      const auto& f = result.gaussian_factors[i];
      per.push_back({{"index", f.factor_index},
                     {"mean", vector_json(f.mean)},
                     {"cov", matrix_json(f.cov)},
                     {"jitter", f.jitter},
                     {"log_ci", result.log_ci.at(i)},
                     {"acceptance", result.factors.at(i).acceptance_rate()}});
    }
    g["per_factor"] = per;
    write_json(dir / "gaussian_posterior.json", g);
  }
  if (result.gaussian_lattice) write_lattice_posterior(*result.gaussian_lattice, dir / "gaussian_lattice.csv");
  if (result.kde_lattice) write_lattice_posterior(*result.kde_lattice, dir / "kde_lattice.csv");

  json lm;
  lm["log_ci"] = result.log_ci;
  lm["sum_log_ci"] = std::accumulate(result.log_ci.begin(), result.log_ci.end(), 0.0);
  if (result.log_marginal_gaussian) lm["gaussian"] = *result.log_marginal_gaussian;
  if (result.log_marginal_kde) {
    lm["kde"] = *result.log_marginal_kde;
    lm["q_used"] = result.kde_factors.front().q_used();
  }
  if (!result.warnings.empty()) lm["warnings"] = result.warnings;
  write_json(dir / "log_marginal.json", lm);

  if (!result.gaussian_samples.empty()) write_text(dir / "samples_gaussian.csv", rows_csv(d, result.gaussian_samples));
  if (!result.kde_samples.empty()) write_text(dir / "samples_kde.csv", rows_csv(d, result.kde_samples));

  json rr;
  rr["workers"] = result.workers;
  rr["wall_seconds"] = result.seconds;
  rr["simulator_calls"] = result.report.simulator_calls;
  rr["runaway_draws"] = result.report.runaway_draws;
  rr["mean_acceptance"] = result.report.mean_acceptance();
  json timings = json::array();
  for (const auto& t : result.report.timings) timings.push_back({{"index", t.factor_index}, {"seconds", t.seconds}});
  rr["factor_seconds"] = timings;
  write_json(dir / "run_report.json", rr);
}

std::vector<FactorSampleSet> read_factor_samples(const fs::path& run_dir, const Dataset& data) {
  const auto abc = json::parse(read_text(run_dir / "abc_run.json"));
  const auto cfg = parse_run_config(abc.at("config").dump());
  validate(data, cfg.model);
  std::vector<FactorSampleSet> out;
  for (const auto& f : abc.at("factors")) {
    FactorSampleSet fs;
    fs.factor_index = f.at("index").get<int>();
    if (fs.factor_index < 2 || static_cast<std::size_t>(fs.factor_index) > data.size())
      throw ConfigError("factor index out of range for the dataset");
    fs.total_draws = f.at("total_draws").get<std::int64_t>();
    fs.runaway_draws = f.at("runaway_draws").get<std::int64_t>();
    fs.samples = read_matrix_csv(run_dir / f.at("file").get<std::string>(), cfg.model.param_dim());
    fs.from = data.observations[static_cast<std::size_t>(fs.factor_index - 2)];
    fs.to = data.observations[static_cast<std::size_t>(fs.factor_index - 1)];
    out.push_back(std::move(fs));
  }
  return out;
}

OracleResult run_oracle(const RunConfig& cfg, const Dataset& data) {
  require_model_match(cfg, data);
  const int d = cfg.model.param_dim();
  const int points = cfg.oracle.points_per_dim.value_or(2 * lattice_points(cfg));
  const std::vector<int> counts(static_cast<std::size_t>(d), points);
  const auto log_post = exact_log_posterior(cfg.model, cfg.prior, data, cfg.oracle.include_first);
  OracleResult out;
  out.model_id = std::string(cfg.model.name());
  if (cfg.estimator.lattice.lower) {
    out.posterior = evaluate_on_lattice(Lattice(*cfg.estimator.lattice.lower, *cfg.estimator.lattice.upper, counts),
                                        log_post, cfg.abc.workers);
  } else {
    ParamVec lo = cfg.prior.is_gaussian() ? ParamVec(cfg.prior.mean - 8.0 * cfg.prior.sd) : cfg.prior.lower;
    ParamVec hi = cfg.prior.is_gaussian() ? ParamVec(cfg.prior.mean + 8.0 * cfg.prior.sd) : cfg.prior.upper;
    out.posterior = auto_lattice_posterior(Lattice(lo, hi, counts), log_post, cfg.abc.workers);
  }
  out.log_marginal_true = out.posterior.log_normaliser;
  return out;
}

void write_oracle_artifacts(const RunConfig& cfg, const OracleResult& oracle, const fs::path& dir) {
  write_text(dir / "config.json", to_json_text(cfg));
  write_lattice_posterior(oracle.posterior, dir / "oracle_lattice.csv");
  json j;
  j["model_id"] = oracle.model_id;
  j["log_marginal_true"] = oracle.log_marginal_true;
  j["include_first"] = cfg.oracle.include_first;
  write_json(dir / "oracle.json", j);
}

void run_sweep_q(const RunConfig& cfg, std::span<const FactorSampleSet> factors, const fs::path& dir) {
  if (cfg.estimator.q_list.empty()) throw ConfigError("sweep-q needs estimator.q_list");
  const int d = cfg.model.param_dim();
  default_points_per_dim(d);
  write_text(dir / "config.json", to_json_text(cfg));
  fs::create_directories(dir / "q_sweep");

  std::vector<double> log_ci;
  for (const auto& fs : factors) log_ci.push_back(estimate_ci(fs, cfg.abc.ball));

  std::optional<Lattice> shared;
  std::string summary = "q,log_marginal\n";
  for (double q : cfg.estimator.q_list) {
    std::vector<KDEFactor> kf;
    for (const auto& fs : factors) kf.push_back(fit_kde_factor(fs, q));
    const auto target = kde_log_target(kf, cfg.prior);
    LatticePosterior lp =
        shared ? evaluate_on_lattice(*shared, target, cfg.abc.workers) : inference_lattice(cfg, factors, target);
    if (!shared) shared = lp.lattice;
    std::string csv = "dim,theta,density\n";
    for (int k = 0; k < d; ++k) {
      const auto m = marginal_1d(lp, k);
      for (std::size_t i = 0; i < m.x.size(); ++i)
        csv += std::to_string(k + 1) + "," + format_real(m.x[i]) + "," + format_real(m.density[i]) + "\n";
    }
    write_text(dir / "q_sweep" / ("q_" + format_real(q) + ".csv"), csv);
    summary += format_real(q) + "," + format_real(log_marginal_kde(lp, log_ci)) + "\n";
  }
  write_text(dir / "q_sweep" / "summary.csv", summary);
}

}  // namespace pwabc
