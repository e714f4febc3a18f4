#include "probmatch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "probmatch/error.hpp"

namespace probmatch::stats {

double mean(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::invalid_argument, "mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (const double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double median(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::invalid_argument, "median of empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double max(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::invalid_argument, "max of empty sample");
  return *std::max_element(x.begin(), x.end());
}

std::vector<double> sample_quantiles(std::span<const double> x, int count) {
  if (x.empty()) fail(ErrorCode::invalid_argument, "quantiles of empty sample");
  if (count < 1) fail(ErrorCode::invalid_argument, "quantile count must be >= 1");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const auto n = static_cast<std::uint64_t>(s.size());
  const auto den = static_cast<std::uint64_t>(count) + 1;
  std::vector<double> q(static_cast<std::size_t>(count));
  for (int k = 1; k <= count; ++k) {
    std::uint64_t i = (static_cast<std::uint64_t>(k) * n + den - 1) / den;
    q[static_cast<std::size_t>(k - 1)] = s[std::max<std::uint64_t>(i, 1) - 1];
  }
  return q;
}

double paired_t_pvalue(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::invalid_argument, "paired samples differ in length");
  if (a.size() < 2) fail(ErrorCode::invalid_argument, "paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double m = mean(d);
  const double var = sample_variance(d);
  const double scale = std::max(1.0, std::abs(m));
  if (var <= 1e-28 * scale * scale) return std::abs(m) <= 1e-14 * scale ? 1.0 : 0.0;
  const double n = static_cast<double>(d.size());
  const double t = m / std::sqrt(var / n);
  const boost::math::students_t dist(n - 1.0);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) fail(ErrorCode::invalid_argument, "KS test needs two nonempty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double ne = n * m / (n + m);
  return {d, kolmogorov_survival(d * std::sqrt(ne))};
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double wilcoxon_exact_pvalue(std::span<const double> ranks, double statistic) {
  const std::size_t n = ranks.size();
  if (n > 20) fail(ErrorCode::invalid_argument, "exact enumeration limited to 20 ranks");
  const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  const double center = total / 2.0;
  const double observed = std::abs(statistic - center);
  // ranks are multiples of 1/2, so compare on a half-integer grid
  const double tol = 1e-9;
  std::uint64_t extreme = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t{1} << i)) w += ranks[i];
    if (std::abs(w - center) >= observed - tol) ++extreme;
  }
  return std::min(1.0, static_cast<double>(extreme) / static_cast<double>(patterns));
}

double wilcoxon_normal_pvalue(std::span<const double> ranks, double statistic) {
  const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  const double center = total / 2.0;
  // Var(W+) = sum(r_i^2) / 4 covers tied (averaged) ranks exactly.
  double sq = 0.0;
  for (const double r : ranks) sq += r * r;
  const double sd = std::sqrt(sq / 4.0);
  if (sd == 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(statistic - center) - 0.5) / sd;
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> samples, double mu0) {
  std::vector<double> diffs;
  for (const double s : samples) {
    if (!std::isfinite(s)) fail(ErrorCode::invalid_argument, "non-finite sample in Wilcoxon test");
    const double d = s - mu0;
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.size() < 5) fail(ErrorCode::invalid_argument, "Wilcoxon test needs at least 5 nonzero differences");
  std::vector<double> mags(diffs.size());
  std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);
  double w = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0.0) w += ranks[i];
  const bool exact = diffs.size() <= kWilcoxonExactLimit;
  const double p = exact ? wilcoxon_exact_pvalue(ranks, w) : wilcoxon_normal_pvalue(ranks, w);
  return {w, p, diffs.size(), exact};
}

}  // namespace probmatch::stats
