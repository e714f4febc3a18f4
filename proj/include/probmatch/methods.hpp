#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "probmatch/dataset.hpp"
#include "probmatch/genetic.hpp"

namespace probmatch {

enum class Method { genmatch, probgenmatch, optgenmatch };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

/// Everything a matching method needs besides the data.
struct MethodConfig {
  MatchConstraints constraints;
  LossSpec loss;
  GaConfig ga;
  int quantile_count = kDefaultQuantileCount;
  MonteCarloConfig mc;
  std::optional<MatchRegime> regime;

  MatchingProblem::Options problem_options() const;
};

/// Point view of possibly stochastic observations: treatments supported on
/// {0,1} become their most likely label, everything else its mean.
Observations point_estimates(const Observations& obs);

/// Classical genetic matching on point-mass observations.
EvolveResult genmatch(const Observations& obs, const MethodConfig& cfg);
/// Probabilistic genetic matching.
EvolveResult probgenmatch(const Observations& obs, const MethodConfig& cfg);
/// Classical genetic matching on the noise-free columns of the dataset.
EvolveResult optgenmatch(const StudyDataset& dataset, const MethodConfig& cfg);

/// Dispatch on a single dataset: genmatch sees point_estimates of the
/// observations, probgenmatch the observations, optgenmatch the truth.
EvolveResult run_method(Method method, const StudyDataset& dataset, const MethodConfig& cfg);

/// JSON round trip for the configuration pieces (field names as in the
/// structs). Missing fields keep their defaults.
void from_json(const nlohmann::json& j, MatchConstraints& c);
void from_json(const nlohmann::json& j, LossSpec& l);
void from_json(const nlohmann::json& j, GaConfig& g);
void to_json(nlohmann::json& j, const MatchConstraints& c);
void to_json(nlohmann::json& j, const LossSpec& l);
void to_json(nlohmann::json& j, const GaConfig& g);

}  // namespace probmatch
