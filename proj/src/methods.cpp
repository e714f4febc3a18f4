#include "probmatch/methods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "probmatch/error.hpp"

namespace probmatch {

Method parse_method(std::string_view name) {
  if (name == "genmatch") return Method::genmatch;
  if (name == "probgenmatch") return Method::probgenmatch;
  if (name == "optgenmatch") return Method::optgenmatch;
  fail(ErrorCode::schema, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::genmatch:
      return "genmatch";
    case Method::probgenmatch:
      return "probgenmatch";
    case Method::optgenmatch:
      return "optgenmatch";
  }
  return "genmatch";
}

MatchingProblem::Options MethodConfig::problem_options() const {
  MatchingProblem::Options o;
  o.constraints = constraints;
  o.loss = loss;
  o.quantile_count = quantile_count;
  o.mc = mc;
  o.regime = regime;
  return o;
}

Observations point_estimates(const Observations& obs) {
  std::vector<StochasticScalar> treatment;
  treatment.reserve(obs.n_units());
  for (const auto& t : obs.treatment()) {
    if (t.is_point()) {
      treatment.push_back(t);
      continue;
    }
    const auto v = t.values();
    const bool binary = t.kind() == StochasticScalar::Kind::discrete &&
                        std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
    treatment.push_back(StochasticScalar::point(binary ? (mean(t) >= 0.5 ? 1.0 : 0.0) : mean(t)));
  }
  std::vector<std::vector<StochasticScalar>> conf(obs.n_confounders());
  for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
    conf[p].reserve(obs.n_units());
    for (const auto& c : obs.confounder_row(p)) conf[p].push_back(c.is_point() ? c : StochasticScalar::point(mean(c)));
  }
  return Observations(std::move(treatment), std::move(conf), obs.confounder_names());
}

EvolveResult genmatch(const Observations& obs, const MethodConfig& cfg) {
  const MatchingProblem problem(obs, DistanceKind::deterministic, cfg.problem_options());
  return evolve_weights(problem, cfg.ga);
}

EvolveResult probgenmatch(const Observations& obs, const MethodConfig& cfg) {
  const MatchingProblem problem(obs, DistanceKind::probabilistic, cfg.problem_options());
  return evolve_weights(problem, cfg.ga);
}

EvolveResult optgenmatch(const StudyDataset& dataset, const MethodConfig& cfg) {
  return genmatch(dataset.truth_observations(), cfg);
}

EvolveResult run_method(Method method, const StudyDataset& dataset, const MethodConfig& cfg) {
  switch (method) {
    case Method::genmatch:
      return genmatch(point_estimates(dataset.observed()), cfg);
    case Method::probgenmatch:
      return probgenmatch(dataset.observed(), cfg);
    case Method::optgenmatch:
      return optgenmatch(dataset, cfg);
  }
  fail(ErrorCode::internal, "unhandled method");
}

namespace {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::schema, std::string("field '") + key + "' has the wrong type");
  }
}

double caliper_from_json(const nlohmann::json& v) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (v.is_string() && (v == "inf" || v == "none")) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) fail(ErrorCode::schema, "caliper entries must be numbers, null or \"inf\"");
  return v.get<double>();
}

}  // namespace

void from_json(const nlohmann::json& j, MatchConstraints& c) {
  if (!j.is_object()) fail(ErrorCode::schema, "constraints must be an object");
  read_opt(j, "min_treatment_diff", c.min_treatment_diff);
  read_opt(j, "treatment_prob_threshold", c.treatment_prob_threshold);
  read_opt(j, "caliper_prob_threshold", c.caliper_prob_threshold);
  read_opt(j, "with_replacement", c.with_replacement);
  read_opt(j, "epsilon", c.epsilon);
  if (j.contains("calipers")) {
    const auto& cal = j.at("calipers");
    if (cal.is_null()) {
      c.calipers.reset();
    } else if (cal.is_array()) {
      std::vector<double> v;
      for (const auto& x : cal) v.push_back(caliper_from_json(x));
      c.calipers = std::move(v);
    } else {
      fail(ErrorCode::schema, "calipers must be an array or null");
    }
  }
}

void to_json(nlohmann::json& j, const MatchConstraints& c) {
  j = nlohmann::json{{"min_treatment_diff", c.min_treatment_diff},
                     {"treatment_prob_threshold", c.treatment_prob_threshold},
                     {"caliper_prob_threshold", c.caliper_prob_threshold},
                     {"with_replacement", c.with_replacement},
                     {"epsilon", c.epsilon}};
  if (c.calipers) {
    auto arr = nlohmann::json::array();
    for (const double x : *c.calipers) {
      if (std::isinf(x))
        arr.push_back(nullptr);
      else
        arr.push_back(x);
    }
    j["calipers"] = arr;
  } else {
    j["calipers"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, LossSpec& l) {
  if (!j.is_object()) fail(ErrorCode::schema, "loss must be an object");
  std::string s;
  if (j.contains("family")) {
    read_opt(j, "family", s);
    l.family = parse_loss_family(s);
  }
  if (j.contains("outer")) {
    read_opt(j, "outer", s);
    l.outer = parse_reduction(s);
  }
  if (j.contains("inner")) {
    read_opt(j, "inner", s);
    l.inner = parse_reduction(s);
  }
  read_opt(j, "quantile_count", l.quantile_count);
  if (l.quantile_count < 1) fail(ErrorCode::schema, "loss quantile_count must be positive");
}

void to_json(nlohmann::json& j, const LossSpec& l) {
  j = nlohmann::json{{"family", std::string(to_string(l.family))},
                     {"outer", std::string(to_string(l.outer))},
                     {"inner", std::string(to_string(l.inner))},
                     {"quantile_count", l.quantile_count}};
}

void from_json(const nlohmann::json& j, GaConfig& g) {
  if (!j.is_object()) fail(ErrorCode::schema, "ga must be an object");
  read_opt(j, "population_size", g.population_size);
  read_opt(j, "generations", g.generations);
  read_opt(j, "weight_low", g.weight_low);
  read_opt(j, "weight_high", g.weight_high);
  read_opt(j, "mutation_sigma", g.mutation_sigma);
  read_opt(j, "crossover_rate", g.crossover_rate);
  read_opt(j, "tournament_size", g.tournament_size);
  read_opt(j, "seed", g.seed);
}

void to_json(nlohmann::json& j, const GaConfig& g) {
  j = nlohmann::json{{"population_size", g.population_size}, {"generations", g.generations},
                     {"weight_low", g.weight_low},           {"weight_high", g.weight_high},
                     {"mutation_sigma", g.mutation_sigma},   {"crossover_rate", g.crossover_rate},
                     {"tournament_size", g.tournament_size}, {"seed", g.seed}};
}

}  // namespace probmatch
