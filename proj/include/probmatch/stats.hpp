#pragma once

#include <span>
#include <vector>

namespace probmatch::stats {

double mean(std::span<const double> x);
/// Sample variance with n-1 denominator; 0 for fewer than two values.
double sample_variance(std::span<const double> x);
double median(std::span<const double> x);
double max(std::span<const double> x);

/// K sample quantiles at levels k/(K+1) (left-continuous generalized inverse
/// of the empirical CDF).
std::vector<double> sample_quantiles(std::span<const double> x, int count);

/// Two-sided paired t-test p-value on the differences a - b. Degenerate
/// differences (zero spread) give 1 when their mean is zero and 0 otherwise.
double paired_t_pvalue(std::span<const double> a, std::span<const double> b);

struct KsResult {
  double statistic;
  double p_value;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
/// distribution for the p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Survival function of the Kolmogorov distribution, Pr(K > lambda).
double kolmogorov_survival(double lambda);

struct WilcoxonResult {
  /// Sum of the ranks of positive differences.
  double statistic;
  double p_value;
  std::size_t n_nonzero;
  bool exact;
};

inline constexpr std::size_t kWilcoxonExactLimit = 12;

/// Wilcoxon signed-rank test of samples against mu0. Zero differences are
/// dropped and tied magnitudes get average ranks. The two-sided p-value is
/// exact (enumeration of all sign patterns) for n <= 12, and otherwise uses
/// the normal approximation with tie and continuity corrections. Requires at
/// least 5 nonzero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> samples, double mu0 = 0.0);

/// Both p-value routes, exposed so they can be cross-checked.
double wilcoxon_exact_pvalue(std::span<const double> ranks, double statistic);
double wilcoxon_normal_pvalue(std::span<const double> ranks, double statistic);

/// Average ranks (1-based) of the values.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace probmatch::stats
