#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pwabc/abc_engine.hpp"
#include "pwabc/models.hpp"

namespace pwabc {

enum class Backend { Gaussian, Kde, Both };

struct LatticeOverride {
  std::optional<int> points_per_dim;
  std::optional<ParamVec> lower, upper;
};

struct EstimatorConfig {
  Backend backend = Backend::Both;
  std::optional<double> q;  // nullopt: optimal_q(d)
  std::vector<double> q_list;
  LatticeOverride lattice;
  int posterior_samples = 0;
};

struct OracleConfig {
  bool include_first = false;
  std::optional<int> points_per_dim;  // default: twice the inference lattice
};

/// One JSON document describing a run. Model parameters and the true
/// parameter are given on the natural scale; the prior lives on the
/// inference (transformed) scale.
struct RunConfig {
  ModelSpec model{BinomialModel{}};
  std::optional<ParamVec> true_params;
  std::optional<StateVec> x0;
  int n = 0;
  double dt = 1.0;
  std::optional<std::uint64_t> data_seed;

  PriorSpec prior;
  ABCConfig abc;
  EstimatorConfig estimator;
  OracleConfig oracle;

  std::string data;    // dataset CSV path, may be empty
  std::string output;  // output directory, may be empty
};

/// Throws ConfigError with line and column for malformed JSON, and names the
/// offending key for unknown or mistyped entries.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Canonical JSON form; parse_run_config(to_json_text(c)) reproduces c.
std::string to_json_text(const RunConfig& cfg);

std::string to_string(Backend b);


}  // namespace pwabc
