#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "probmatch/stochastic.hpp"

namespace probmatch {

using UnitId = std::size_t;

/// The quantities a matching method is allowed to see: one treatment cell and
/// P confounder cells per unit. Ground truth lives elsewhere (see
/// StudyDataset) so estimators under test cannot read it.
class Observations {
 public:
  Observations() = default;
  /// `confounders[p][u]` is confounder p of unit u. Validates shapes:
  /// N >= 2, P >= 1, every row of length N.
  Observations(std::vector<StochasticScalar> treatment,
               std::vector<std::vector<StochasticScalar>> confounders,
               std::vector<std::string> confounder_names = {});

  std::size_t n_units() const noexcept { return treatment_.size(); }
  std::size_t n_confounders() const noexcept { return confounders_.size(); }

  const StochasticScalar& treatment(UnitId u) const { return treatment_[u]; }
  const std::vector<StochasticScalar>& treatment() const noexcept { return treatment_; }
  const StochasticScalar& confounder(std::size_t p, UnitId u) const { return confounders_[p][u]; }
  const std::vector<StochasticScalar>& confounder_row(std::size_t p) const { return confounders_[p]; }
  const std::vector<std::string>& confounder_names() const noexcept { return names_; }

  /// True when every cell is a point mass.
  bool all_point_mass() const;
  bool treatment_point_mass() const;
  bool confounders_point_mass() const;

  /// Expected treatment per unit.
  std::vector<double> treatment_means() const;
  /// Expected value of confounder p per unit.
  std::vector<double> confounder_means(std::size_t p) const;

 private:
  std::vector<StochasticScalar> treatment_;
  std::vector<std::vector<StochasticScalar>> confounders_;
  std::vector<std::string> names_;
};

/// Noise-free values, used only for evaluation.
struct GroundTruth {
  std::vector<double> treatment;
  std::vector<std::vector<double>> confounders;  // P x N
};

/// N units with observations plus optional outcome and ground truth.
class StudyDataset {
 public:
  StudyDataset() = default;
  explicit StudyDataset(Observations observed,
                        std::optional<std::vector<double>> outcome = std::nullopt,
                        std::optional<GroundTruth> truth = std::nullopt);

  std::size_t n_units() const noexcept { return observed_.n_units(); }
  std::size_t n_confounders() const noexcept { return observed_.n_confounders(); }

  const Observations& observed() const noexcept { return observed_; }
  const std::optional<std::vector<double>>& outcome() const noexcept { return outcome_; }
  const std::optional<GroundTruth>& truth() const noexcept { return truth_; }

  /// Observations where every cell is replaced by its ground-truth point
  /// mass. Fails when truth is absent.
  Observations truth_observations() const;

 private:
  Observations observed_;
  std::optional<std::vector<double>> outcome_;
  std::optional<GroundTruth> truth_;
};

struct MatchedPair {
  UnitId treated;
  UnitId control;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// Ordered list of (treated, control) pairs.
class MatchedPairSet {
 public:
  MatchedPairSet() = default;
  explicit MatchedPairSet(std::vector<MatchedPair> pairs);

  void add(UnitId treated, UnitId control);

  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  const std::vector<MatchedPair>& pairs() const noexcept { return pairs_; }
  auto begin() const noexcept { return pairs_.begin(); }
  auto end() const noexcept { return pairs_.end(); }
  const MatchedPair& operator[](std::size_t i) const { return pairs_[i]; }

  /// True when no unit appears in more than one pair (either role).
  bool is_without_replacement() const;

  friend bool operator==(const MatchedPairSet&, const MatchedPairSet&) = default;

 private:
  std::vector<MatchedPair> pairs_;
};

struct MatchConstraints {
  double min_treatment_diff = 0.0;
  double treatment_prob_threshold = 1.0;
  std::optional<std::vector<double>> calipers;  // one per confounder; +inf disables
  double caliper_prob_threshold = 1.0;
  bool with_replacement = false;
  double epsilon = 1e-6;

  /// Throws when a threshold is out of range or epsilon is not positive.
  void validate(std::size_t n_confounders) const;
};

}  // namespace probmatch
