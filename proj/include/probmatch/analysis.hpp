#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probmatch/dataset.hpp"
#include "probmatch/matcher.hpp"

namespace probmatch {

/// |mean(C_U) - mean(C_V)| / sqrt((var(C_U) + var(C_V)) / 2) with n-1
/// variances. Zero spread gives 0 for equal means and +infinity otherwise.
/// Needs at least 2 values per side.
double smd(std::span<const double> treated, std::span<const double> control);

struct ConfounderBalance {
  std::string name;
  double smd = 0.0;
  double ks_pvalue = 1.0;
  double t_pvalue = 1.0;
  std::vector<double> quantile_gaps;
};

struct BalanceReport {
  std::vector<ConfounderBalance> confounders;
  std::size_t pair_count = 0;
  std::size_t dropped_unit_count = 0;
  bool used_truth = false;
};

/// Per-confounder balance of the matched treated/control values.
///
/// Values are the ground truth when `eval_truth` (failing if the dataset has
/// none), otherwise per-unit means of the observations. Under the continuous
/// regime the SMD inputs are scaled by the pair's treatment difference,
/// l_u / (x_u - x_v) and l_v / (x_u - x_v); pairs with zero difference are
/// skipped for the SMD. KS, t-test and quantile gaps use the raw values.
BalanceReport balance_report(const MatchResult& match, const StudyDataset& dataset, bool eval_truth,
                             int quantile_count = 10);

/// Scaled SMD inputs for one confounder (see balance_report).
struct ScaledValues {
  std::vector<double> treated;
  std::vector<double> control;
};
ScaledValues scaled_pair_values(const MatchedPairSet& pairs, std::span<const double> values,
                                std::span<const double> treatment, bool scale_by_treatment);

struct AteEstimate {
  double estimate = 0.0;
  std::vector<double> ratios;  // (y_u - y_v) / (x_u - x_v) per retained pair
  std::size_t excluded_pairs = 0;
};

/// Mean over pairs of (y_u - y_v) / (x_u - x_v) with the given treatment
/// values. Pairs whose treatment difference does not exceed `epsilon` in
/// magnitude are excluded and counted; fails when every pair is excluded.
AteEstimate ate(const MatchedPairSet& pairs, std::span<const double> outcome, std::span<const double> treatment,
                double epsilon = 1e-12);
/// Uses the dataset outcome and point/expected observed treatments.
AteEstimate ate(const MatchedPairSet& pairs, const StudyDataset& dataset);

struct AteResult {
  double estimate = 0.0;
  double wilcoxon_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_pairs = 0;
  std::size_t excluded_pairs = 0;
  bool rejected = false;
};

/// Wilcoxon signed-rank test of the per-pair effect ratios against zero;
/// rejects when p < alpha.
AteResult causal_test(const MatchedPairSet& pairs, std::span<const double> outcome,
                      std::span<const double> treatment, double alpha);
AteResult causal_test(const MatchedPairSet& pairs, const StudyDataset& dataset, double alpha);

nlohmann::json to_json(const BalanceReport& report);
nlohmann::json to_json(const AteResult& result);

}  // namespace probmatch
