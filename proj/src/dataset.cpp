#include "probmatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "probmatch/error.hpp"

namespace probmatch {

Observations::Observations(std::vector<StochasticScalar> treatment,
                           std::vector<std::vector<StochasticScalar>> confounders,
                           std::vector<std::string> confounder_names)
    : treatment_(std::move(treatment)),
      confounders_(std::move(confounders)),
      names_(std::move(confounder_names)) {
  if (treatment_.size() < 2) fail(ErrorCode::schema, "dataset needs at least 2 units");
  if (confounders_.empty()) fail(ErrorCode::schema, "dataset needs at least 1 confounder");
  for (std::size_t p = 0; p < confounders_.size(); ++p) {
    if (confounders_[p].size() != treatment_.size())
      fail(ErrorCode::schema, "confounder " + std::to_string(p) + " has " +
                                  std::to_string(confounders_[p].size()) + " values, expected " +
                                  std::to_string(treatment_.size()));
  }
  if (names_.empty()) {
    for (std::size_t p = 0; p < confounders_.size(); ++p) names_.push_back("z" + std::to_string(p + 1));
  }
  if (names_.size() != confounders_.size())
    fail(ErrorCode::schema, "confounder name count does not match confounder count");
}

bool Observations::treatment_point_mass() const {
  return std::all_of(treatment_.begin(), treatment_.end(), [](const auto& s) { return s.is_point(); });
}

bool Observations::confounders_point_mass() const {
  return std::all_of(confounders_.begin(), confounders_.end(), [](const auto& row) {
    return std::all_of(row.begin(), row.end(), [](const auto& s) { return s.is_point(); });
  });
}

bool Observations::all_point_mass() const { return treatment_point_mass() && confounders_point_mass(); }

std::vector<double> Observations::treatment_means() const {
  std::vector<double> m(treatment_.size());
  std::transform(treatment_.begin(), treatment_.end(), m.begin(), [](const auto& s) { return mean(s); });
  return m;
}

std::vector<double> Observations::confounder_means(std::size_t p) const {
  const auto& row = confounders_.at(p);
  std::vector<double> m(row.size());
  std::transform(row.begin(), row.end(), m.begin(), [](const auto& s) { return mean(s); });
  return m;
}

StudyDataset::StudyDataset(Observations observed, std::optional<std::vector<double>> outcome,
                           std::optional<GroundTruth> truth)
    : observed_(std::move(observed)), outcome_(std::move(outcome)), truth_(std::move(truth)) {
  const std::size_t n = observed_.n_units();
  if (outcome_) {
    if (outcome_->size() != n) fail(ErrorCode::schema, "outcome length does not match unit count");
    for (const double y : *outcome_)
      if (!std::isfinite(y)) fail(ErrorCode::schema, "outcome contains a non-finite value");
  }
  if (truth_) {
    if (truth_->treatment.size() != n)
      fail(ErrorCode::schema, "truth treatment length does not match unit count");
    if (truth_->confounders.size() != observed_.n_confounders())
      fail(ErrorCode::schema, "truth confounder count does not match");
    for (const auto& row : truth_->confounders)
      if (row.size() != n) fail(ErrorCode::schema, "truth confounder length does not match unit count");
  }
}

Observations StudyDataset::truth_observations() const {
  if (!truth_) fail(ErrorCode::schema, "dataset has no ground truth");
  std::vector<StochasticScalar> x;
  x.reserve(n_units());
  for (const double v : truth_->treatment) x.push_back(StochasticScalar::point(v));
  std::vector<std::vector<StochasticScalar>> z;
  for (const auto& row : truth_->confounders) {
    auto& out = z.emplace_back();
    out.reserve(row.size());
    for (const double v : row) out.push_back(StochasticScalar::point(v));
  }
  return Observations(std::move(x), std::move(z), observed_.confounder_names());
}

MatchedPairSet::MatchedPairSet(std::vector<MatchedPair> pairs) : pairs_(std::move(pairs)) {
  for (const auto& p : pairs_)
    if (p.treated == p.control) fail(ErrorCode::invalid_argument, "a unit cannot be matched to itself");
}

void MatchedPairSet::add(UnitId treated, UnitId control) {
  if (treated == control) fail(ErrorCode::invalid_argument, "a unit cannot be matched to itself");
  pairs_.push_back({treated, control});
}

bool MatchedPairSet::is_without_replacement() const {
  std::unordered_set<UnitId> seen;
  for (const auto& p : pairs_) {
    if (!seen.insert(p.treated).second) return false;
    if (!seen.insert(p.control).second) return false;
  }
  return true;
}

void MatchConstraints::validate(std::size_t n_confounders) const {
  if (!(min_treatment_diff >= 0.0)) fail(ErrorCode::invalid_argument, "min_treatment_diff must be >= 0");
  if (!(treatment_prob_threshold >= 0.0 && treatment_prob_threshold <= 1.0))
    fail(ErrorCode::invalid_argument, "treatment_prob_threshold must be in [0,1]");
  if (!(caliper_prob_threshold >= 0.0 && caliper_prob_threshold <= 1.0))
    fail(ErrorCode::invalid_argument, "caliper_prob_threshold must be in [0,1]");
  if (!(epsilon > 0.0)) fail(ErrorCode::invalid_argument, "epsilon must be positive");
  if (calipers) {
    if (calipers->size() != n_confounders)
      fail(ErrorCode::invalid_argument, "caliper count does not match confounder count");
    for (const double c : *calipers)
      if (!(c >= 0.0)) fail(ErrorCode::invalid_argument, "calipers must be nonnegative");
  }
}

}  // namespace probmatch
