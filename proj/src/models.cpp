#include "pwabc/models.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "pwabc/error.hpp"

namespace pwabc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// log p and log(1-p) for p = logistic(x), accurate in both tails.
double log_logistic(double x) { return -std::log1p(std::exp(-x)); }
double log_one_minus_logistic(double x) { return -std::log1p(std::exp(x)); }

double binomial_logpmf_logit(double x, double trials, double logit_p) {
  if (x < 0 || x > trials) return kNegInf;
  return log_factorial(trials) - log_factorial(x) - log_factorial(trials - x) +
         x * log_logistic(logit_p) + (trials - x) * log_one_minus_logistic(logit_p);
}

template <class Int>
Int binomial_draw(Int trials, double p, RandomStream& rng) {
  if (p <= 0.0 || trials == 0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<Int> draw(trials, p);
  return draw(rng);
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

struct CirCoefficients {
  double c;    // 2a / (sigma^2 (1 - e^{-a dt}))
  double df;   // 4ab / sigma^2
  double nc;   // 2c x e^{-a dt}
};

CirCoefficients cir_coefficients(const CirModel& m, double b, double x, double dt) {
  const double s2 = m.sigma * m.sigma;
  const double decay = std::exp(-m.a * dt);
  const double c = 2.0 * m.a / (s2 * -std::expm1(-m.a * dt));
  return {c, 4.0 * m.a * b / s2, 2.0 * c * x * decay};
}

double log_chi_square(double z, double k) {
  const double h = 0.5 * k;
  return (h - 1.0) * std::log(z) - 0.5 * z - h * std::log(2.0) - std::lgamma(h);
}

// Non-central chi-square log density as a Poisson mixture of central
// chi-squares, summed outward from the largest term.
double log_noncentral_chi_square(double z, double df, double nc, double tol) {
  if (!(z > 0)) return kNegInf;
  const double half_nc = 0.5 * nc;
  if (half_nc == 0.0) return log_chi_square(z, df);
  auto log_term = [&](double j) {
    return j * std::log(half_nc) - half_nc - std::lgamma(j + 1.0) + log_chi_square(z, df + 2.0 * j);
  };
  // Term ratio t_{j+1}/t_j = (nc z / 4) / ((j + 1)(df/2 + j)); peak where it crosses 1.
  const double qa = 1.0, qb = 0.5 * df + 1.0, qc = 0.5 * df - 0.25 * nc * z;
  const double root = (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
  const double j0 = std::max(0.0, std::ceil(root));
  const double peak = log_term(j0);
  const double log_tol = std::log(tol);
  double sum = 1.0;
  for (double j = j0 + 1.0;; j += 1.0) {
    const double r = log_term(j) - peak;
    sum += std::exp(r);
    if (r < log_tol) break;
  }
  for (double j = j0 - 1.0; j >= 0.0; j -= 1.0) {
    const double r = log_term(j) - peak;
    sum += std::exp(r);
    if (r < log_tol) break;
  }
  return peak + std::log(sum);
}

template <class Observer>
bool gillespie(const LotkaVolterraModel& model, const ParamVec& theta, double& prey, double& predators,
               double t0, double t1, RandomStream& rng, Observer&& observe) {
  const double r1 = std::exp(theta[0]);
  const double r2 = std::exp(theta[1]);
  const double r3 = std::exp(theta[2]);
  double t = t0;
  while (true) {
    const double h1 = r1 * prey;
    const double h2 = r2 * prey * predators;
    const double h3 = r3 * predators;
    const double h0 = h1 + h2 + h3;
    if (h0 <= 0.0) break;
    t -= std::log(rng.uniform_open()) / h0;
    if (t > t1) break;
    const double u = rng.uniform_open() * h0;
    if (u < h1) {
      prey += 1.0;
    } else if (u < h1 + h2) {
      prey -= 1.0;
      predators += 1.0;
    } else {
      predators -= 1.0;
    }
    if (prey > model.population_cap || predators > model.population_cap) return false;
    observe(t, prey, predators);
  }
  return true;
}

void require_discrete_state(const StateVec& s) {
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (!is_integer(s[k]) || s[k] < 0) throw ConfigError("discrete model needs non-negative integer states");
}

}  // namespace

// ---------------------------------------------------------------------------
// Priors

PriorSpec PriorSpec::gaussian(ParamVec mean, ParamVec sd) {
  PriorSpec p;
  p.kind = PriorKind::Gaussian;
  p.mean = std::move(mean);
  p.sd = std::move(sd);
  validate(p);
  return p;
}

PriorSpec PriorSpec::uniform_box(ParamVec lower, ParamVec upper) {
  PriorSpec p;
  p.kind = PriorKind::UniformBox;
  p.lower = std::move(lower);
  p.upper = std::move(upper);
  validate(p);
  return p;
}

int PriorSpec::dim() const {
  return static_cast<int>(is_gaussian() ? mean.size() : lower.size());
}

double PriorSpec::logpdf(const ParamVec& theta) const {
  if (theta.size() != dim()) throw NumericalError("prior dimension mismatch");
  if (is_gaussian()) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double s = 0.0;
    for (int k = 0; k < dim(); ++k) {
      const double z = (theta[k] - mean[k]) / sd[k];
      s += -kHalfLog2Pi - std::log(sd[k]) - 0.5 * z * z;
    }
    return s;
  }
  for (int k = 0; k < dim(); ++k)
    if (theta[k] < lower[k] || theta[k] > upper[k]) return kNegInf;
  return -box_log_volume();
}

GaussianDensity PriorSpec::as_gaussian() const {
  if (!is_gaussian()) throw ConfigError("prior is not Gaussian");
  return {mean, sd.array().square().matrix().asDiagonal()};
}

double PriorSpec::box_log_volume() const {
  if (is_gaussian()) throw ConfigError("prior is not a uniform box");
  return (upper - lower).array().log().sum();
}

void validate(const PriorSpec& prior) {
  if (prior.is_gaussian()) {
    if (prior.mean.size() == 0 || prior.mean.size() != prior.sd.size())
      throw ConfigError("Gaussian prior needs matching non-empty mean and sd");
    if (!prior.mean.allFinite() || !(prior.sd.array() > 0).all() || !prior.sd.allFinite())
      throw ConfigError("Gaussian prior sds must be positive and finite");
  } else {
    if (prior.lower.size() == 0 || prior.lower.size() != prior.upper.size())
      throw ConfigError("uniform prior needs matching non-empty lower and upper");
    if (!(prior.lower.array() < prior.upper.array()).all() || !prior.lower.allFinite() ||
        !prior.upper.allFinite())
      throw ConfigError("uniform prior needs finite lower < upper");
  }
}

void sample_prior(const PriorSpec& prior, RandomStream& rng, ParamVec& out) {
  const int d = prior.dim();
  out.resize(d);
  if (prior.is_gaussian()) {
    std::normal_distribution<double> normal;
    for (int k = 0; k < d; ++k) out[k] = prior.mean[k] + prior.sd[k] * normal(rng);
  } else {
    for (int k = 0; k < d; ++k)
      out[k] = prior.lower[k] + (prior.upper[k] - prior.lower[k]) * rng.uniform_open();
  }
}

ParamVec sample_prior(const PriorSpec& prior, RandomStream& rng) {
  ParamVec out;
  sample_prior(prior, rng, out);
  return out;
}

// ---------------------------------------------------------------------------
// Model descriptors

std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::Binomial: return "binomial";
    case ModelId::Cir: return "cir";
    case ModelId::Inar1: return "inar1";
    case ModelId::LotkaVolterra: return "lotka_volterra";
  }
  return "unknown";
}

ModelId parse_model_id(std::string_view name) {
  for (auto id : {ModelId::Binomial, ModelId::Cir, ModelId::Inar1, ModelId::LotkaVolterra})
    if (to_string(id) == name) return id;
  throw ConfigError("unknown model id '" + std::string(name) + "'");
}

std::string_view ModelSpec::name() const noexcept { return to_string(id()); }

int ModelSpec::param_dim() const noexcept {
  switch (id()) {
    case ModelId::Binomial:
    case ModelId::Cir: return 1;
    case ModelId::Inar1: return 2;
    case ModelId::LotkaVolterra: return 3;
  }
  return 0;
}

int ModelSpec::obs_dim() const noexcept { return id() == ModelId::LotkaVolterra ? 2 : 1; }

bool ModelSpec::discrete() const noexcept { return id() != ModelId::Cir; }

std::vector<Transform> ModelSpec::transforms() const {
  switch (id()) {
    case ModelId::Binomial: return {Transform::Logit};
    case ModelId::Cir: return {Transform::Log};
    case ModelId::Inar1: return {Transform::Logit, Transform::Log};
    case ModelId::LotkaVolterra: return {Transform::Log, Transform::Log, Transform::Log};
  }
  return {};
}

std::vector<std::string> ModelSpec::param_names() const {
  switch (id()) {
    case ModelId::Binomial: return {"logit_p"};
    case ModelId::Cir: return {"log_b"};
    case ModelId::Inar1: return {"logit_alpha", "log_lambda"};
    case ModelId::LotkaVolterra: return {"log_r1", "log_r2", "log_r3"};
  }
  return {};
}

ParamVec ModelSpec::to_inference(const ParamVec& natural) const {
  const auto t = transforms();
  if (natural.size() != static_cast<Eigen::Index>(t.size()))
    throw ConfigError("parameter vector has the wrong length for model " + std::string(name()));
  ParamVec out(natural.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double v = natural[k];
    switch (t[k]) {
      case Transform::Identity: out[k] = v; break;
      case Transform::Log:
        if (!(v > 0)) throw ConfigError("log-scale parameter must be positive");
        out[k] = std::log(v);
        break;
      case Transform::Logit:
        if (!(v > 0 && v < 1)) throw ConfigError("logit-scale parameter must lie in (0, 1)");
        out[k] = logit(v);
        break;
    }
  }
  return out;
}

ParamVec ModelSpec::to_natural(const ParamVec& theta) const {
  const auto t = transforms();
  if (theta.size() != static_cast<Eigen::Index>(t.size()))
    throw ConfigError("parameter vector has the wrong length for model " + std::string(name()));
  ParamVec out(theta.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    switch (t[k]) {
      case Transform::Identity: out[k] = theta[k]; break;
      case Transform::Log: out[k] = std::exp(theta[k]); break;
      case Transform::Logit: out[k] = logistic(theta[k]); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

std::optional<StateVec> simulate_transition(const ModelSpec& model, const ParamVec& theta,
                                            const Observation& from, double to_time, RandomStream& rng) {
  return std::visit(
      Overloaded{
          [&](const BinomialModel& m) -> std::optional<StateVec> {
            StateVec s(1);
            s[0] = binomial_draw(m.trials, logistic(theta[0]), rng);
            return s;
          },
          [&](const CirModel& m) -> std::optional<StateVec> {
            const double x = from.state[0];
            if (!(x > 0)) throw Error("CIR state must be positive");
            const auto k = cir_coefficients(m, std::exp(theta[0]), x, to_time - from.time);
            std::poisson_distribution<long long> count(0.5 * k.nc);
            std::gamma_distribution<double> chi(0.5 * k.df + static_cast<double>(count(rng)), 2.0);
            StateVec s(1);
            s[0] = chi(rng) / (2.0 * k.c);
            return s;
          },
          [&](const Inar1Model&) -> std::optional<StateVec> {
            const auto prev = static_cast<long long>(from.state[0]);
            const long long survivors = binomial_draw(prev, logistic(theta[0]), rng);
            std::poisson_distribution<long long> arrivals(std::exp(theta[1]));
            StateVec s(1);
            s[0] = static_cast<double>(survivors + arrivals(rng));
            return s;
          },
          [&](const LotkaVolterraModel& m) -> std::optional<StateVec> {
            double prey = from.state[0];
            double predators = from.state[1];
            if (!gillespie(m, theta, prey, predators, from.time, to_time, rng, [](double, double, double) {}))
              return std::nullopt;
            StateVec s(2);
            s << prey, predators;
            return s;
          },
      },
      model.kind());
}

std::vector<LvEvent> lv_path(const LotkaVolterraModel& model, const ParamVec& theta, double prey,
                             double predators, double t0, double t1, RandomStream& rng) {
  std::vector<LvEvent> path;
  const bool ok = gillespie(model, theta, prey, predators, t0, t1, rng,
                            [&](double t, double y1, double y2) { path.push_back({t, y1, y2}); });
  if (!ok) return {};
  path.push_back({t1, prey, predators});
  return path;
}

bool has_exact_transition(const ModelSpec& model) noexcept {
  return model.id() != ModelId::LotkaVolterra;
}

double exact_transition_logpdf(const ModelSpec& model, const ParamVec& theta, const Observation& from,
                               const Observation& to, double series_tol) {
  return std::visit(
      Overloaded{
          [&](const BinomialModel& m) {
            require_discrete_state(to.state);
            return binomial_logpmf_logit(to.state[0], m.trials, theta[0]);
          },
          [&](const CirModel& m) {
            const double x = from.state[0];
            const double y = to.state[0];
            if (!(x > 0)) throw Error("CIR state must be positive");
            if (!(y > 0)) return kNegInf;
            const auto k = cir_coefficients(m, std::exp(theta[0]), x, to.time - from.time);
            return std::log(2.0 * k.c) + log_noncentral_chi_square(2.0 * k.c * y, k.df, k.nc, series_tol);
          },
          [&](const Inar1Model&) {
            require_discrete_state(from.state);
            require_discrete_state(to.state);
            const double prev = from.state[0];
            const double cur = to.state[0];
            const double lambda = std::exp(theta[1]);
            const int top = static_cast<int>(std::min(prev, cur));
            std::vector<double> terms(static_cast<std::size_t>(top) + 1);
            for (int k = 0; k <= top; ++k)
              terms[k] = binomial_logpmf_logit(k, prev, theta[0]) + log_poisson_pmf(cur - k, lambda);
            return log_sum_exp(terms);
          },
          [&](const LotkaVolterraModel&) -> double {
            throw ConfigError("Lotka-Volterra has no tractable transition density");
          },
      },
      model.kind());
}

double initial_logpdf(const ModelSpec& model, const ParamVec& theta, const Observation& first) {
  return std::visit(
      Overloaded{
          [&](const BinomialModel& m) {
            require_discrete_state(first.state);
            return binomial_logpmf_logit(first.state[0], m.trials, theta[0]);
          },
          [&](const CirModel& m) {
            // Stationary law: Gamma(shape 2ab/sigma^2, rate 2a/sigma^2).
            const double y = first.state[0];
            if (!(y > 0)) return kNegInf;
            const double s2 = m.sigma * m.sigma;
            const double shape = 2.0 * m.a * std::exp(theta[0]) / s2;
            const double rate = 2.0 * m.a / s2;
            return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(y) - rate * y;
          },
          [&](const Inar1Model&) {
            // Stationary law: Po(lambda / (1 - alpha)).
            require_discrete_state(first.state);
            const double mean = std::exp(theta[1]) / logistic(-theta[0]);
            return log_poisson_pmf(first.state[0], mean);
          },
          [&](const LotkaVolterraModel&) -> double {
            throw ConfigError("Lotka-Volterra has no tractable initial density");
          },
      },
      model.kind());
}

Dataset simulate_dataset(const ModelSpec& model, const ParamVec& theta_true, int n, double dt,
                         const StateVec& x0, std::uint64_t seed) {
  if (n < 2) throw ConfigError("a dataset needs at least two observations");
  if (!(dt > 0)) throw ConfigError("observation spacing dt must be positive");
  if (theta_true.size() != model.param_dim()) throw ConfigError("theta_true has the wrong dimension");
  if (!model.iid() && x0.size() != model.obs_dim()) throw ConfigError("x0 has the wrong dimension");

  Dataset data;
  data.model_id = std::string(model.name());
  data.discrete = model.discrete();
  data.theta_true = theta_true;
  data.seed = seed;
  data.dt = dt;
  data.observations.reserve(static_cast<std::size_t>(n));

  Observation current{0.0, x0};
  if (model.iid()) {
    RandomStream rng(seed, streams::kDataset, 0);
    current.state = *simulate_transition(model, theta_true, current, 0.0, rng);
  }
  data.observations.push_back(current);
  for (int i = 1; i < n; ++i) {
    RandomStream rng(seed, streams::kDataset, static_cast<std::uint64_t>(i));
    const double t = i * dt;
    auto next = simulate_transition(model, theta_true, current, t, rng);
    if (!next) throw Error("simulated trajectory exceeded the population cap");
    current = Observation{t, *next};
    data.observations.push_back(current);
  }
  return data;
}

void validate(const Dataset& data, const ModelSpec& model, std::size_t min_size) {
  if (data.observations.size() < min_size)
    throw ConfigError("dataset needs at least " + std::to_string(min_size) + " observations");
  if (!data.model_id.empty() && data.model_id != model.name())
    throw ConfigError("dataset was generated by model '" + data.model_id + "', not '" +
                      std::string(model.name()) + "'");
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    const auto& o = data.observations[i];
    if (o.state.size() != model.obs_dim()) throw ConfigError("observation has the wrong state dimension");
    if (!o.state.allFinite() || !std::isfinite(o.time)) throw ConfigError("observation is not finite");
    if (model.discrete()) require_discrete_state(o.state);
    if (i > 0 && !(o.time > data.observations[i - 1].time))
      throw ConfigError("observation times must be strictly increasing");
  }
}

}  // namespace pwabc
