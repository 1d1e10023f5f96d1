#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pwabc/core_math.hpp"
#include "pwabc/random_stream.hpp"

namespace pwabc {

/// Observed state; integer-valued states are held exactly as doubles.
/// Capacity is fixed so that simulation never touches the heap.
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

struct Observation {
  double time = 0.0;
  StateVec state;
};

struct Dataset {
  std::string model_id;
  std::vector<Observation> observations;
  bool discrete = false;
  std::optional<ParamVec> theta_true;  // inference scale
  std::optional<std::uint64_t> seed;
  double dt = 1.0;

  std::size_t size() const noexcept { return observations.size(); }
};

// ---------------------------------------------------------------------------
// Priors

enum class PriorKind { Gaussian, UniformBox };

struct PriorSpec {
  PriorKind kind = PriorKind::Gaussian;
  ParamVec mean, sd;      // Gaussian
  ParamVec lower, upper;  // UniformBox

  static PriorSpec gaussian(ParamVec mean, ParamVec sd);
  static PriorSpec uniform_box(ParamVec lower, ParamVec upper);

  int dim() const;
  bool is_gaussian() const noexcept { return kind == PriorKind::Gaussian; }
  /// -inf outside a uniform box.
  double logpdf(const ParamVec& theta) const;
  /// Diagonal Gaussian view; only valid for Gaussian priors.
  GaussianDensity as_gaussian() const;
  double box_log_volume() const;
};

void validate(const PriorSpec& prior);
ParamVec sample_prior(const PriorSpec& prior, RandomStream& rng);
void sample_prior(const PriorSpec& prior, RandomStream& rng, ParamVec& out);

// ---------------------------------------------------------------------------
// Models

enum class ModelId { Binomial, Cir, Inar1, LotkaVolterra };
enum class Transform { Identity, Log, Logit };

/// X_i ~ Binom(trials, p), IID; theta = logit(p).
struct BinomialModel {
  int trials = 100;
};

/// dX = a(b - X)dt + sigma sqrt(X) dW with a, sigma known; theta = log(b).
struct CirModel {
  double a = 0.5;
  double sigma = 0.15;
};

/// X_t = alpha o X_{t-1} + Po(lambda); theta = (logit alpha, log lambda).
struct Inar1Model {};

/// Prey birth r1 Y1, predation r2 Y1 Y2, predator death r3 Y2; theta = log r.
struct LotkaVolterraModel {
  double population_cap = 1e6;
};

class ModelSpec {
 public:
  using Kind = std::variant<BinomialModel, CirModel, Inar1Model, LotkaVolterraModel>;

  ModelSpec(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

  const Kind& kind() const noexcept { return kind_; }
  ModelId id() const noexcept { return static_cast<ModelId>(kind_.index()); }
  std::string_view name() const noexcept;
  int param_dim() const noexcept;
  int obs_dim() const noexcept;
  bool discrete() const noexcept;
  /// Observations are independent given theta (the transition ignores `from`).
  bool iid() const noexcept { return id() == ModelId::Binomial; }
  std::vector<Transform> transforms() const;
  std::vector<std::string> param_names() const;

  ParamVec to_inference(const ParamVec& natural) const;
  ParamVec to_natural(const ParamVec& theta) const;

 private:
  Kind kind_;
};

std::string_view to_string(ModelId id);
ModelId parse_model_id(std::string_view name);

/// One exact draw of the state at to_time given `from`. Returns nullopt when
/// the trajectory runs away (Lotka-Volterra population above the cap).
std::optional<StateVec> simulate_transition(const ModelSpec& model, const ParamVec& theta,
                                            const Observation& from, double to_time, RandomStream& rng);

bool has_exact_transition(const ModelSpec& model) noexcept;

/// Exact log transition density (CIR) or pmf (binomial, INAR(1)).
/// `series_tol` bounds the relative size of truncated CIR series terms.
double exact_transition_logpdf(const ModelSpec& model, const ParamVec& theta, const Observation& from,
                               const Observation& to, double series_tol = 1e-16);

/// log pi(x_1 | theta) under the stationary law (binomial: the pmf itself).
double initial_logpdf(const ModelSpec& model, const ParamVec& theta, const Observation& first);

/// Chains n-1 transitions at spacing dt from x0. IID models draw all n.
Dataset simulate_dataset(const ModelSpec& model, const ParamVec& theta_true, int n, double dt,
                         const StateVec& x0, std::uint64_t seed);

/// Checks ordering, dimensions, and integrality against the model.
void validate(const Dataset& data, const ModelSpec& model, std::size_t min_size = 2);

/// One Gillespie event: time and populations after it fired.
struct LvEvent {
  double time;
  double prey;
  double predators;
};

/// Full event path of a Lotka-Volterra trajectory on (t0, t1]. The last
/// element is the state at t1 (carried forward). Empty when capped.
std::vector<LvEvent> lv_path(const LotkaVolterraModel& model, const ParamVec& theta, double prey,
                             double predators, double t0, double t1, RandomStream& rng);

}  // namespace pwabc
