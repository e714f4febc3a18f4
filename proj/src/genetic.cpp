#include "probmatch/genetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "probmatch/error.hpp"
#include "probmatch/stats.hpp"

namespace probmatch {

Reduction parse_reduction(std::string_view name) {
  if (name == "mean") return Reduction::mean;
  if (name == "max") return Reduction::max;
  if (name == "median") return Reduction::median;
  fail(ErrorCode::schema, "unknown reduction '" + std::string(name) + "'");
}

std::string_view to_string(Reduction r) {
  switch (r) {
    case Reduction::mean:
      return "mean";
    case Reduction::max:
      return "max";
    case Reduction::median:
      return "median";
  }
  return "?";
}

LossFamily parse_loss_family(std::string_view name) {
  if (name == "quantile") return LossFamily::quantile;
  if (name == "pvalue_min" || name == "pvalue") return LossFamily::pvalue_min;
  fail(ErrorCode::schema, "unknown loss family '" + std::string(name) + "'");
}

std::string_view to_string(LossFamily f) { return f == LossFamily::quantile ? "quantile" : "pvalue_min"; }

double reduce(Reduction r, std::span<const double> values) {
  switch (r) {
    case Reduction::mean:
      return stats::mean(values);
    case Reduction::max:
      return stats::max(values);
    case Reduction::median:
      return stats::median(values);
  }
  return 0.0;
}

double loss_pvalue(const MatchedPairSet& pairs, const Observations& obs) {
  if (pairs.size() < 2) fail(ErrorCode::invalid_argument, "p-value loss needs at least 2 pairs");
  double worst = 1.0;
  for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
    std::vector<double> t, c;
    t.reserve(pairs.size());
    c.reserve(pairs.size());
    for (const auto& pr : pairs) {
      t.push_back(mean(obs.confounder(p, pr.treated)));
      c.push_back(mean(obs.confounder(p, pr.control)));
    }
    worst = std::min(worst, stats::paired_t_pvalue(t, c));
  }
  return worst;
}

double loss_quantile_deterministic(const MatchedPairSet& pairs, const Observations& obs, const LossSpec& spec,
                                   double epsilon) {
  if (pairs.empty()) fail(ErrorCode::invalid_argument, "quantile loss needs at least 1 pair");
  if (!obs.all_point_mass()) fail(ErrorCode::invalid_argument, "deterministic loss needs point-mass data");
  std::vector<double> per_confounder;
  std::vector<double> sample(pairs.size());
  for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [u, v] = pairs[i];
      const double dz = std::abs(obs.confounder(p, u).value() - obs.confounder(p, v).value());
      const double dx = std::abs(obs.treatment(u).value() - obs.treatment(v).value());
      sample[i] = dz / std::max(dx, epsilon);
    }
    const auto q = stats::sample_quantiles(sample, spec.quantile_count);
    per_confounder.push_back(reduce(spec.inner, q));
  }
  return reduce(spec.outer, per_confounder);
}

RatioQuantileCache::RatioQuantileCache(const Observations& obs, int quantile_count, double epsilon,
                                       MonteCarloConfig mc)
    : obs_(&obs), k_(quantile_count), eps_(epsilon), mc_(mc) {
  if (quantile_count < 1) fail(ErrorCode::invalid_argument, "quantile count must be >= 1");
}

const QuantileVector& RatioQuantileCache::get(std::size_t p, UnitId u, UnitId v) const {
  if (u > v) std::swap(u, v);
  const std::uint64_t n = obs_->n_units();
  const std::uint64_t key = (static_cast<std::uint64_t>(p) * n + u) * n + v;
  std::lock_guard lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;
  const auto pair_mc = mc_.with_stream(key);
  const auto num = diff_abs_distribution(obs_->confounder(p, u), obs_->confounder(p, v), pair_mc);
  const auto den = diff_abs_distribution(obs_->treatment(u), obs_->treatment(v), pair_mc.with_stream(~key));
  auto q = std::make_unique<QuantileVector>(quantiles(ratio_distribution(num, den, eps_, pair_mc), k_));
  return *cache_.emplace(key, std::move(q)).first->second;
}

double loss_quantile_probabilistic(const MatchedPairSet& pairs, const RatioQuantileCache& cache,
                                   std::size_t n_confounders, const LossSpec& spec) {
  if (pairs.empty()) fail(ErrorCode::invalid_argument, "quantile loss needs at least 1 pair");
  std::vector<double> per_confounder;
  for (std::size_t p = 0; p < n_confounders; ++p) {
    std::vector<double> avg;
    for (const auto& pr : pairs) {
      const auto& q = cache.get(p, pr.treated, pr.control);
      if (avg.empty()) avg.assign(q.values.size(), 0.0);
      for (std::size_t k = 0; k < q.values.size(); ++k) avg[k] += q.values[k];
    }
    for (auto& a : avg) a /= static_cast<double>(pairs.size());
    per_confounder.push_back(reduce(spec.inner, avg));
  }
  return reduce(spec.outer, per_confounder);
}

double loss_quantile_probabilistic(const MatchedPairSet& pairs, const Observations& obs, const LossSpec& spec,
                                   const MonteCarloConfig& mc, double epsilon) {
  const RatioQuantileCache cache(obs, spec.quantile_count, epsilon, mc);
  return loss_quantile_probabilistic(pairs, cache, obs.n_confounders(), spec);
}

void GaConfig::validate() const {
  if (population_size < 4) fail(ErrorCode::invalid_argument, "population_size must be >= 4");
  if (generations < 1) fail(ErrorCode::invalid_argument, "generations must be >= 1");
  if (!(weight_low > 0.0) || !(weight_high >= weight_low))
    fail(ErrorCode::invalid_argument, "weight bounds must satisfy 0 < low <= high");
  if (!(mutation_sigma > 0.0)) fail(ErrorCode::invalid_argument, "mutation_sigma must be positive");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0))
    fail(ErrorCode::invalid_argument, "crossover_rate must be in [0,1]");
  if (tournament_size < 2) fail(ErrorCode::invalid_argument, "tournament_size must be >= 2");
}

namespace {

struct Individual {
  std::vector<double> log_w;
  double score;  // lower is better
  Evaluation eval;
};

WeightMatrix to_weights(const std::vector<double>& log_w) {
  std::vector<double> w(log_w.size());
  std::transform(log_w.begin(), log_w.end(), w.begin(), [](double l) { return std::exp(l); });
  return WeightMatrix(std::move(w));
}

}  // namespace

EvolveResult evolve(const Objective& objective, std::size_t n_weights, bool minimize, const GaConfig& ga) {
  ga.validate();
  if (n_weights == 0) fail(ErrorCode::invalid_argument, "need at least one weight");
  const double lo = std::log(ga.weight_low);
  const double hi = std::log(ga.weight_high);

  EvolveResult result;
  auto score_of = [&](const Evaluation& e) {
    if (std::isnan(e.loss)) return std::numeric_limits<double>::infinity();
    return minimize ? e.loss : -e.loss;
  };
  auto make = [&](std::vector<double> log_w) {
    Evaluation e = objective(to_weights(log_w));
    ++result.evaluations;
    const double s = score_of(e);
    return Individual{std::move(log_w), s, std::move(e)};
  };

  std::vector<Individual> pop;
  pop.reserve(ga.population_size);
  for (std::size_t i = 0; i < ga.population_size; ++i) {
    std::mt19937_64 rng(derive_seed(ga.seed, {0, i}));
    std::uniform_real_distribution<double> unif(lo, hi);
    std::vector<double> g(n_weights);
    for (auto& x : g) x = unif(rng);
    pop.push_back(make(std::move(g)));
  }

  auto best_index = [](const std::vector<Individual>& p) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i].score < p[b].score) b = i;
    return b;
  };

  std::size_t best = best_index(pop);
  result.history.push_back(pop[best].eval.loss);

  for (std::size_t gen = 1; gen < ga.generations; ++gen) {
    std::vector<Individual> next;
    next.reserve(ga.population_size);
    next.push_back(pop[best]);
    for (std::size_t i = 1; i < ga.population_size; ++i) {
      std::mt19937_64 rng(derive_seed(ga.seed, {gen, i}));
      std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
      auto tournament = [&]() {
        std::size_t winner = pick(rng);
        for (std::size_t t = 1; t < ga.tournament_size; ++t) {
          const std::size_t c = pick(rng);
          if (pop[c].score < pop[winner].score || (pop[c].score == pop[winner].score && c < winner)) winner = c;
        }
        return winner;
      };
      const auto& a = pop[tournament()];
      const auto& b = pop[tournament()];
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, ga.mutation_sigma);
      std::vector<double> child = a.log_w;
      if (unif(rng) < ga.crossover_rate) {
        for (std::size_t j = 0; j < n_weights; ++j)
          if (unif(rng) < 0.5) child[j] = b.log_w[j];
      }
      for (auto& x : child) x = std::clamp(x + gauss(rng), lo, hi);
      next.push_back(make(std::move(child)));
    }
    pop = std::move(next);
    best = best_index(pop);
    result.history.push_back(pop[best].eval.loss);
  }

  result.weights = to_weights(pop[best].log_w);
  result.match = pop[best].eval.match;
  result.loss = pop[best].eval.loss;
  return result;
}

MatchingProblem::MatchingProblem(const Observations& obs, DistanceKind kind, Options options)
    : obs_(std::make_shared<const Observations>(obs)), kind_(kind), options_(std::move(options)) {
  options_.constraints.validate(obs_->n_confounders());
  regime_ = options_.regime.value_or(detect_regime(*obs_));
  if (regime_ == MatchRegime::binary_bipartite && detect_regime(*obs_) != MatchRegime::binary_bipartite)
    fail(ErrorCode::invalid_argument, "binary regime requested for non-binary treatment");
  if (kind_ == DistanceKind::deterministic && !obs_->all_point_mass())
    fail(ErrorCode::invalid_argument, "deterministic matching needs point-mass observations");
  const auto transform = covariance_sqrt(*obs_);
  distances_ = std::make_unique<PairDistanceCache>(*obs_, transform, kind_, options_.quantile_count);
  mask_ = std::make_unique<AdmissibilityMask>(*obs_, options_.constraints, options_.mc);
  if (kind_ == DistanceKind::probabilistic && options_.loss.family == LossFamily::quantile)
    ratios_ = std::make_unique<RatioQuantileCache>(*obs_, options_.loss.quantile_count,
                                                   options_.constraints.epsilon, options_.mc);
}

double MatchingProblem::distance(UnitId u, UnitId v, const WeightMatrix& w) const {
  if (regime_ == MatchRegime::binary_bipartite && kind_ == DistanceKind::deterministic)
    return distances_->weighted(u, v, w);
  return unit_distance(u, v, *distances_, w, options_.constraints.epsilon);
}

MatchResult MatchingProblem::match(const WeightMatrix& w) const {
  if (w.size() != n_weights()) fail(ErrorCode::invalid_argument, "weight count does not match confounders");
  const PairDistance d = [&](UnitId u, UnitId v) { return distance(u, v, w); };
  auto result = regime_ == MatchRegime::binary_bipartite ? match_binary(*obs_, d, options_.constraints, *mask_)
                                                         : match_continuous(*obs_, d, options_.constraints, *mask_);
  if (result.pairs.empty()) fail(ErrorCode::no_pairs, "no admissible pairs");
  return result;
}

double MatchingProblem::loss(const MatchedPairSet& pairs) const {
  const auto& spec = options_.loss;
  if (spec.family == LossFamily::pvalue_min) return loss_pvalue(pairs, *obs_);
  if (kind_ == DistanceKind::deterministic)
    return loss_quantile_deterministic(pairs, *obs_, spec, options_.constraints.epsilon);
  return loss_quantile_probabilistic(pairs, *ratios_, obs_->n_confounders(), spec);
}

Evaluation MatchingProblem::evaluate(const WeightMatrix& w) const {
  const double worst = options_.loss.minimize() ? std::numeric_limits<double>::infinity()
                                                : -std::numeric_limits<double>::infinity();
  try {
    auto m = match(w);
    if (options_.loss.family == LossFamily::pvalue_min && m.pairs.size() < 2) return {std::move(m), worst};
    const double l = loss(m.pairs);
    return {std::move(m), l};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_pairs) throw;
    return {MatchResult{}, worst};
  }
}

EvolveResult evolve_weights(const MatchingProblem& problem, const GaConfig& ga) {
  return evolve([&](const WeightMatrix& w) { return problem.evaluate(w); }, problem.n_weights(),
                problem.options().loss.minimize(), ga);
}

}  // namespace probmatch
