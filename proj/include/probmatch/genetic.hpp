#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "probmatch/dataset.hpp"
#include "probmatch/distance.hpp"
#include "probmatch/matcher.hpp"
#include "probmatch/stochastic.hpp"

namespace probmatch {

enum class LossFamily { pvalue_min, quantile };
enum class Reduction { mean, max, median };

Reduction parse_reduction(std::string_view name);
std::string_view to_string(Reduction r);
LossFamily parse_loss_family(std::string_view name);
std::string_view to_string(LossFamily f);

/// Balance loss. The p-value family is maximized (larger minimum p-value means
/// better balance); the quantile family outer_p inner_k is minimized.
struct LossSpec {
  LossFamily family = LossFamily::quantile;
  Reduction outer = Reduction::mean;
  Reduction inner = Reduction::mean;
  int quantile_count = kDefaultQuantileCount;

  bool minimize() const noexcept { return family == LossFamily::quantile; }
};

double reduce(Reduction r, std::span<const double> values);

/// Minimum over confounders of the paired t-test p-value between matched
/// treated and control values (per-unit means for stochastic cells).
/// Needs at least 2 pairs.
double loss_pvalue(const MatchedPairSet& pairs, const Observations& obs);

/// Quantiles of the per-pair sample |z_u - z_v| / max(|x_u - x_v|, eps), reduced
/// over quantiles (inner) and confounders (outer). Point-mass data only.
double loss_quantile_deterministic(const MatchedPairSet& pairs, const Observations& obs, const LossSpec& spec,
                                   double epsilon = 1e-6);

/// Lazily computed quantiles of A^p_{u,v} = |Z^p_u - Z^p_v| / max(|X_u - X_v|, eps)
/// per unordered pair and confounder. Thread-safe.
class RatioQuantileCache {
 public:
  RatioQuantileCache(const Observations& obs, int quantile_count, double epsilon, MonteCarloConfig mc);

  const QuantileVector& get(std::size_t p, UnitId u, UnitId v) const;

 private:
  const Observations* obs_;
  int k_;
  double eps_;
  MonteCarloConfig mc_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, std::unique_ptr<QuantileVector>> cache_;
};

/// For each confounder, averages the K quantiles of A^p over matched pairs and
/// reduces the averaged quantiles (inner) and then confounders (outer).
double loss_quantile_probabilistic(const MatchedPairSet& pairs, const Observations& obs, const LossSpec& spec,
                                   const MonteCarloConfig& mc, double epsilon = 1e-6);
double loss_quantile_probabilistic(const MatchedPairSet& pairs, const RatioQuantileCache& cache,
                                   std::size_t n_confounders, const LossSpec& spec);

struct GaConfig {
  std::size_t population_size = 50;
  std::size_t generations = 20;
  double weight_low = 1e-3;
  double weight_high = 1e3;
  double mutation_sigma = 0.3;
  double crossover_rate = 0.9;
  std::size_t tournament_size = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Evaluation {
  MatchResult match;
  /// Loss in its natural direction; +inf (minimized) or -inf (maximized)
  /// marks an infeasible candidate.
  double loss;
};

using Objective = std::function<Evaluation(const WeightMatrix&)>;

struct EvolveResult {
  WeightMatrix weights;
  MatchResult match;
  double loss = 0.0;
  std::size_t evaluations = 0;
  /// Best loss after each generation (natural direction).
  std::vector<double> history;
};

/// Real-coded genetic search over diagonal weights: log-uniform initial
/// population, tournament selection, uniform crossover, log-normal
/// multiplicative mutation, one elite. `generations` counts evaluated
/// populations, so 1 means only the initial population is scored. Each child
/// draws from its own RNG stream keyed by (seed, generation, index).
EvolveResult evolve(const Objective& objective, std::size_t n_weights, bool minimize, const GaConfig& ga);

/// One dataset prepared for repeated matching under different weights.
class MatchingProblem {
 public:
  struct Options {
    MatchConstraints constraints;
    LossSpec loss;
    /// Quantile count for the distances D(.,.).
    int quantile_count = kDefaultQuantileCount;
    MonteCarloConfig mc;
    /// Detected from the treatment when empty.
    std::optional<MatchRegime> regime;
  };

  MatchingProblem(const Observations& obs, DistanceKind kind, Options options);

  MatchRegime regime() const noexcept { return regime_; }
  DistanceKind kind() const noexcept { return kind_; }
  const Observations& observations() const noexcept { return *obs_; }
  const PairDistanceCache& distances() const noexcept { return *distances_; }
  const AdmissibilityMask& admissibility() const noexcept { return *mask_; }
  const Options& options() const noexcept { return options_; }
  std::size_t n_weights() const noexcept { return obs_->n_confounders(); }

  /// Distance between two units for the given weights.
  double distance(UnitId u, UnitId v, const WeightMatrix& w) const;
  /// Matching induced by the weights; throws ErrorCode::no_pairs when empty.
  MatchResult match(const WeightMatrix& w) const;
  /// Balance loss of a matching (natural direction).
  double loss(const MatchedPairSet& pairs) const;
  /// match + loss; infeasible matchings get the worst loss instead of throwing.
  Evaluation evaluate(const WeightMatrix& w) const;

 private:
  std::shared_ptr<const Observations> obs_;
  DistanceKind kind_;
  Options options_;
  MatchRegime regime_;
  std::unique_ptr<PairDistanceCache> distances_;
  std::unique_ptr<AdmissibilityMask> mask_;
  std::unique_ptr<RatioQuantileCache> ratios_;
};

/// Runs the genetic search for a prepared problem.
EvolveResult evolve_weights(const MatchingProblem& problem, const GaConfig& ga);

}  // namespace probmatch
