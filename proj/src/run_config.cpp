#include "pwabc/run_config.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <set>

#include <json.hpp>

#include "pwabc/dataset_io.hpp"
#include "pwabc/error.hpp"

namespace pwabc {

namespace {

using json = nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.contains(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

double get_real(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + " must be finite");
  return v;
}

std::int64_t get_int(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e18) return static_cast<std::int64_t>(v);
  }
  throw ConfigError(path + " must be an integer");
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const auto v = get_int(j, path);
  if (v < 0) throw ConfigError(path + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

int get_small_int(const json& j, const std::string& path, int min_value) {
  const auto v = get_int(j, path);
  if (v < min_value || v > std::numeric_limits<int>::max())
    throw ConfigError(path + " must be an integer >= " + std::to_string(min_value));
  return static_cast<int>(v);
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + " must be a string");
  return j.get<std::string>();
}

ParamVec get_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + " must be a non-empty array of numbers");
  ParamVec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = get_real(j[k], path);
  return v;
}

json vector_json(const ParamVec& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

std::string transform_name(Transform t) {
  switch (t) {
    case Transform::Identity: return "identity";
    case Transform::Log: return "log";
    case Transform::Logit: return "logit";
  }
  return "identity";
}

ModelSpec parse_model_kind(const std::string& id, const json* params) {
  const std::string where = "model.params";
  switch (parse_model_id(id)) {
    case ModelId::Binomial: {
      BinomialModel m;
      if (params) {
        check_keys(*params, where, {"trials"});
        if (params->contains("trials")) m.trials = get_small_int(params->at("trials"), where + ".trials", 1);
      }
      return ModelSpec(m);
    }
    case ModelId::Cir: {
      CirModel m;
      if (params) {
        check_keys(*params, where, {"a", "sigma"});
        if (params->contains("a")) m.a = get_real(params->at("a"), where + ".a");
        if (params->contains("sigma")) m.sigma = get_real(params->at("sigma"), where + ".sigma");
      }
      if (!(m.a > 0) || !(m.sigma > 0)) throw ConfigError("CIR a and sigma must be positive");
      return ModelSpec(m);
    }
    case ModelId::Inar1:
      if (params) check_keys(*params, where, {});
      return ModelSpec(Inar1Model{});
    case ModelId::LotkaVolterra: {
      LotkaVolterraModel m;
      if (params) {
        check_keys(*params, where, {"population_cap"});
        if (params->contains("population_cap"))
          m.population_cap = get_real(params->at("population_cap"), where + ".population_cap");
      }
      if (!(m.population_cap > 0)) throw ConfigError("population_cap must be positive");
      return ModelSpec(m);
    }
  }
  throw ConfigError("unknown model id");
}

json model_params_json(const ModelSpec& model) {
  json p = json::object();
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BinomialModel>) {
          p["trials"] = m.trials;
        } else if constexpr (std::is_same_v<T, CirModel>) {
          p["a"] = m.a;
          p["sigma"] = m.sigma;
        } else if constexpr (std::is_same_v<T, LotkaVolterraModel>) {
          p["population_cap"] = m.population_cap;
        }
      },
      model.kind());
  return p;
}

void parse_model(const json& j, RunConfig& cfg) {
  check_keys(j, "model", {"id", "params", "transform", "true_params", "x0", "n", "dt", "seed"});
  if (!j.contains("id")) throw ConfigError("model.id is required");
  cfg.model = parse_model_kind(get_string(j["id"], "model.id"), j.contains("params") ? &j["params"] : nullptr);
  if (j.contains("transform")) {
    const auto& t = j["transform"];
    const auto expected = cfg.model.transforms();
    if (!t.is_array() || t.size() != expected.size())
      throw ConfigError("model.transform must list one transform per parameter");
    for (std::size_t k = 0; k < expected.size(); ++k)
      if (get_string(t[k], "model.transform") != transform_name(expected[k]))
        throw ConfigError("model.transform is fixed per model; parameter " + std::to_string(k + 1) + " uses " +
                          transform_name(expected[k]));
  }
  if (j.contains("true_params")) {
    const auto natural = get_vector(j["true_params"], "model.true_params");
    cfg.true_params = natural;
    cfg.model.to_inference(natural);  // range and length check
  }
  if (j.contains("x0")) {
    const auto x = get_vector(j["x0"], "model.x0");
    if (x.size() != cfg.model.obs_dim()) throw ConfigError("model.x0 has the wrong dimension");
    cfg.x0 = StateVec(x);
  }
  if (j.contains("n")) cfg.n = get_small_int(j["n"], "model.n", 1);
  if (j.contains("dt")) {
    cfg.dt = get_real(j["dt"], "model.dt");
    if (!(cfg.dt > 0)) throw ConfigError("model.dt must be positive");
  }
  if (j.contains("seed")) cfg.data_seed = get_seed(j["seed"], "model.seed");
}

void parse_prior(const json& j, RunConfig& cfg) {
  const std::string kind = j.contains("kind") ? get_string(j["kind"], "prior.kind") : "gaussian";
  if (kind == "gaussian") {
    check_keys(j, "prior", {"kind", "mean", "sd"});
    if (!j.contains("mean") || !j.contains("sd")) throw ConfigError("Gaussian prior needs prior.mean and prior.sd");
    cfg.prior = PriorSpec::gaussian(get_vector(j["mean"], "prior.mean"), get_vector(j["sd"], "prior.sd"));
  } else if (kind == "uniform") {
    check_keys(j, "prior", {"kind", "lower", "upper"});
    if (!j.contains("lower") || !j.contains("upper"))
      throw ConfigError("uniform prior needs prior.lower and prior.upper");
    cfg.prior = PriorSpec::uniform_box(get_vector(j["lower"], "prior.lower"), get_vector(j["upper"], "prior.upper"));
  } else {
    throw ConfigError("prior.kind must be \"gaussian\" or \"uniform\"");
  }
  validate(cfg.prior);
  if (cfg.prior.dim() != cfg.model.param_dim())
    throw ConfigError("prior dimension " + std::to_string(cfg.prior.dim()) + " does not match model dimension " +
                      std::to_string(cfg.model.param_dim()));
}

void parse_abc(const json& j, RunConfig& cfg) {
  check_keys(j, "abc", {"m", "epsilon", "p", "seed", "max_draws", "workers"});
  auto& abc = cfg.abc;
  if (j.contains("m")) abc.m = get_small_int(j["m"], "abc.m", 2);
  if (j.contains("epsilon")) abc.ball.epsilon = get_real(j["epsilon"], "abc.epsilon");
  if (j.contains("p")) {
    const auto& p = j["p"];
    std::string s = p.is_string() ? p.get<std::string>() : p.is_number() ? p.dump() : "";
    if (s == "2" || s == "2.0") {
      abc.ball.p = Norm::L2;
    } else if (s == "inf" || s == "infinity") {
      abc.ball.p = Norm::LInf;
    } else {
      throw ConfigError("abc.p must be 2 or \"inf\"");
    }
  }
  if (j.contains("seed")) abc.seed = get_seed(j["seed"], "abc.seed");
  if (j.contains("max_draws")) {
    abc.max_draws_per_factor = get_int(j["max_draws"], "abc.max_draws");
    if (abc.max_draws_per_factor < 1) throw ConfigError("abc.max_draws must be positive");
  }
  if (j.contains("workers")) abc.workers = get_small_int(j["workers"], "abc.workers", 1);
}

void parse_estimator(const json& j, RunConfig& cfg) {
  check_keys(j, "estimator", {"backend", "q", "q_list", "lattice", "posterior_samples"});
  auto& est = cfg.estimator;
  if (j.contains("backend")) {
    const auto b = get_string(j["backend"], "estimator.backend");
    if (b == "gaussian") est.backend = Backend::Gaussian;
    else if (b == "kde") est.backend = Backend::Kde;
    else if (b == "both") est.backend = Backend::Both;
    else throw ConfigError("estimator.backend must be gaussian, kde or both");
  }
  if (j.contains("q")) {
    const auto& q = j["q"];
    if (q.is_string()) {
      if (q.get<std::string>() != "auto") throw ConfigError("estimator.q must be a number or \"auto\"");
    } else {
      est.q = get_real(q, "estimator.q");
      if (!(*est.q > 0)) throw ConfigError("estimator.q must be positive");
    }
  }
  if (j.contains("q_list")) {
    if (!j["q_list"].is_array()) throw ConfigError("estimator.q_list must be an array");
    for (const auto& q : j["q_list"]) {
      est.q_list.push_back(get_real(q, "estimator.q_list"));
      if (!(est.q_list.back() > 0)) throw ConfigError("estimator.q_list entries must be positive");
    }
  }
  if (j.contains("lattice")) {
    const auto& l = j["lattice"];
    check_keys(l, "estimator.lattice", {"points_per_dim", "lower", "upper"});
    if (l.contains("points_per_dim"))
      est.lattice.points_per_dim = get_small_int(l["points_per_dim"], "estimator.lattice.points_per_dim", 2);
    if (l.contains("lower")) est.lattice.lower = get_vector(l["lower"], "estimator.lattice.lower");
    if (l.contains("upper")) est.lattice.upper = get_vector(l["upper"], "estimator.lattice.upper");
    if (est.lattice.lower.has_value() != est.lattice.upper.has_value())
      throw ConfigError("estimator.lattice needs both lower and upper");
    if (est.lattice.lower) {
      if (est.lattice.lower->size() != cfg.model.param_dim() || est.lattice.upper->size() != cfg.model.param_dim())
        throw ConfigError("estimator.lattice bounds have the wrong dimension");
      if (!(est.lattice.lower->array() < est.lattice.upper->array()).all())
        throw ConfigError("estimator.lattice needs lower < upper");
    }
  }
  if (j.contains("posterior_samples"))
    est.posterior_samples = get_small_int(j["posterior_samples"], "estimator.posterior_samples", 0);
}

void parse_oracle(const json& j, RunConfig& cfg) {
  check_keys(j, "oracle", {"include_first", "points_per_dim"});
  if (j.contains("include_first")) {
    if (!j["include_first"].is_boolean()) throw ConfigError("oracle.include_first must be true or false");
    cfg.oracle.include_first = j["include_first"].get<bool>();
  }
  if (j.contains("points_per_dim"))
    cfg.oracle.points_per_dim = get_small_int(j["points_per_dim"], "oracle.points_per_dim", 2);
}

std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

std::string to_string(Backend b) {
  switch (b) {
    case Backend::Gaussian: return "gaussian";
    case Backend::Kde: return "kde";
    case Backend::Both: return "both";
  }
  return "both";
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON at " + locate(text, e.byte) + ": " + e.what());
  }
  check_keys(j, "", {"model", "prior", "abc", "estimator", "oracle", "data", "output"});
  if (!j.contains("model")) throw ConfigError("model section is required");
  if (!j.contains("prior")) throw ConfigError("prior section is required");

  RunConfig cfg;
  parse_model(j["model"], cfg);
  parse_prior(j["prior"], cfg);
  if (j.contains("abc")) parse_abc(j["abc"], cfg);
  cfg.abc.ball.dim_u = cfg.model.obs_dim();
  cfg.abc.ball.discrete = cfg.model.discrete();
  validate(cfg.abc);
  if (j.contains("estimator")) parse_estimator(j["estimator"], cfg);
  if (j.contains("oracle")) parse_oracle(j["oracle"], cfg);
  if (j.contains("data")) cfg.data = get_string(j["data"], "data");
  if (j.contains("output")) cfg.output = get_string(j["output"], "output");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text(path));
}

std::string to_json_text(const RunConfig& cfg) {
  json model;
  model["id"] = std::string(to_string(cfg.model.id()));
  model["params"] = model_params_json(cfg.model);
  json transforms = json::array();
  for (auto t : cfg.model.transforms()) transforms.push_back(transform_name(t));
  model["transform"] = transforms;
  if (cfg.true_params) model["true_params"] = vector_json(*cfg.true_params);
  if (cfg.x0) model["x0"] = vector_json(ParamVec(*cfg.x0));
  if (cfg.n > 0) model["n"] = cfg.n;
  model["dt"] = cfg.dt;
  if (cfg.data_seed) model["seed"] = *cfg.data_seed;

  json prior;
  if (cfg.prior.is_gaussian()) {
    prior["kind"] = "gaussian";
    prior["mean"] = vector_json(cfg.prior.mean);
    prior["sd"] = vector_json(cfg.prior.sd);
  } else {
    prior["kind"] = "uniform";
    prior["lower"] = vector_json(cfg.prior.lower);
    prior["upper"] = vector_json(cfg.prior.upper);
  }

  json abc;
  abc["m"] = cfg.abc.m;
  abc["epsilon"] = cfg.abc.ball.epsilon;
  abc["p"] = cfg.abc.ball.p == Norm::L2 ? "2" : "inf";
  abc["seed"] = cfg.abc.seed;
  abc["max_draws"] = cfg.abc.max_draws_per_factor;
  abc["workers"] = cfg.abc.workers;

  json est;
  est["backend"] = to_string(cfg.estimator.backend);
  if (cfg.estimator.q) est["q"] = *cfg.estimator.q;
  else est["q"] = "auto";
  est["q_list"] = cfg.estimator.q_list;
  json lattice = json::object();
  if (cfg.estimator.lattice.points_per_dim) lattice["points_per_dim"] = *cfg.estimator.lattice.points_per_dim;
  if (cfg.estimator.lattice.lower) lattice["lower"] = vector_json(*cfg.estimator.lattice.lower);
  if (cfg.estimator.lattice.upper) lattice["upper"] = vector_json(*cfg.estimator.lattice.upper);
  est["lattice"] = lattice;
  est["posterior_samples"] = cfg.estimator.posterior_samples;

  json oracle;
  oracle["include_first"] = cfg.oracle.include_first;
  if (cfg.oracle.points_per_dim) oracle["points_per_dim"] = *cfg.oracle.points_per_dim;

  json out;
  out["model"] = model;
  out["prior"] = prior;
  out["abc"] = abc;
  out["estimator"] = est;
  out["oracle"] = oracle;
  if (!cfg.data.empty()) out["data"] = cfg.data;
  if (!cfg.output.empty()) out["output"] = cfg.output;
  return out.dump(2) + "\n";
}

}  // namespace pwabc
