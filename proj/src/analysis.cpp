#include "probmatch/analysis.hpp"

#include <cmath>
#include <limits>

#include "probmatch/error.hpp"
#include "probmatch/stats.hpp"

namespace probmatch {

using nlohmann::json;

double smd(std::span<const double> treated, std::span<const double> control) {
  if (treated.size() < 2 || control.size() < 2) fail(ErrorCode::invalid_argument, "SMD needs at least 2 pairs");
  const double diff = std::abs(stats::mean(treated) - stats::mean(control));
  const double pooled = (stats::sample_variance(treated) + stats::sample_variance(control)) / 2.0;
  if (pooled <= 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / std::sqrt(pooled);
}

ScaledValues scaled_pair_values(const MatchedPairSet& pairs, std::span<const double> values,
                                std::span<const double> treatment, bool scale_by_treatment) {
  ScaledValues out;
  for (const auto& p : pairs) {
    double scale = 1.0;
    if (scale_by_treatment) {
      const double dx = treatment[p.treated] - treatment[p.control];
      if (dx == 0.0) continue;
      scale = dx;
    }
    out.treated.push_back(values[p.treated] / scale);
    out.control.push_back(values[p.control] / scale);
  }
  return out;
}

BalanceReport balance_report(const MatchResult& match, const StudyDataset& dataset, bool eval_truth,
                             int quantile_count) {
  const auto& pairs = match.pairs;
  if (pairs.empty()) fail(ErrorCode::no_pairs, "balance report needs at least one pair");
  if (eval_truth && !dataset.truth()) fail(ErrorCode::schema, "ground truth requested but not available");
  const auto& obs = dataset.observed();
  const bool continuous = detect_regime(obs) == MatchRegime::continuous_nonbipartite;
  const std::vector<double> treatment = eval_truth ? dataset.truth()->treatment : obs.treatment_means();

  BalanceReport report;
  report.pair_count = pairs.size();
  report.dropped_unit_count = match.dropped_units;
  report.used_truth = eval_truth;
  for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
    const std::vector<double> values = eval_truth ? dataset.truth()->confounders[p] : obs.confounder_means(p);
    ConfounderBalance cb;
    cb.name = obs.confounder_names()[p];
    std::vector<double> t_raw, c_raw;
    for (const auto& pr : pairs) {
      t_raw.push_back(values[pr.treated]);
      c_raw.push_back(values[pr.control]);
    }
    const auto scaled = scaled_pair_values(pairs, values, treatment, continuous);
    cb.smd = scaled.treated.size() >= 2 ? smd(scaled.treated, scaled.control) : 0.0;
    cb.ks_pvalue = stats::ks_two_sample(t_raw, c_raw).p_value;
    cb.t_pvalue = t_raw.size() >= 2 ? stats::paired_t_pvalue(t_raw, c_raw) : 1.0;
    const auto qt = stats::sample_quantiles(t_raw, quantile_count);
    const auto qc = stats::sample_quantiles(c_raw, quantile_count);
    for (std::size_t k = 0; k < qt.size(); ++k) cb.quantile_gaps.push_back(std::abs(qt[k] - qc[k]));
    report.confounders.push_back(std::move(cb));
  }
  return report;
}

AteEstimate ate(const MatchedPairSet& pairs, std::span<const double> outcome, std::span<const double> treatment,
                double epsilon) {
  AteEstimate est;
  for (const auto& p : pairs) {
    const double dx = treatment[p.treated] - treatment[p.control];
    if (!(std::abs(dx) > epsilon)) {
      ++est.excluded_pairs;
      continue;
    }
    est.ratios.push_back((outcome[p.treated] - outcome[p.control]) / dx);
  }
  if (est.ratios.empty()) fail(ErrorCode::no_pairs, "every pair has a zero treatment difference");
  est.estimate = stats::mean(est.ratios);
  return est;
}

AteEstimate ate(const MatchedPairSet& pairs, const StudyDataset& dataset) {
  if (!dataset.outcome()) fail(ErrorCode::schema, "dataset has no outcome");
  return ate(pairs, *dataset.outcome(), dataset.observed().treatment_means());
}

AteResult causal_test(const MatchedPairSet& pairs, std::span<const double> outcome,
                      std::span<const double> treatment, double alpha) {
  const auto est = ate(pairs, outcome, treatment);
  const auto w = stats::wilcoxon_signed_rank(est.ratios, 0.0);
  AteResult r;
  r.estimate = est.estimate;
  r.wilcoxon_statistic = w.statistic;
  r.p_value = w.p_value;
  r.n_pairs = est.ratios.size();
  r.excluded_pairs = est.excluded_pairs;
  r.rejected = w.p_value < alpha;
  return r;
}

AteResult causal_test(const MatchedPairSet& pairs, const StudyDataset& dataset, double alpha) {
  if (!dataset.outcome()) fail(ErrorCode::schema, "dataset has no outcome");
  return causal_test(pairs, *dataset.outcome(), dataset.observed().treatment_means(), alpha);
}

json to_json(const BalanceReport& report) {
  json confs = json::array();
  for (const auto& c : report.confounders) {
    json j{{"name", c.name},
           {"ks_pvalue", c.ks_pvalue},
           {"t_pvalue", c.t_pvalue},
           {"quantile_gaps", c.quantile_gaps},
           {"smd_degenerate", !std::isfinite(c.smd)}};
    j["smd"] = std::isfinite(c.smd) ? json(c.smd) : json(nullptr);
    confs.push_back(std::move(j));
  }
  return json{{"confounders", std::move(confs)},
              {"pair_count", report.pair_count},
              {"dropped_unit_count", report.dropped_unit_count},
              {"used_truth", report.used_truth}};
}

json to_json(const AteResult& r) {
  return json{{"estimate", r.estimate},           {"wilcoxon_statistic", r.wilcoxon_statistic},
              {"p_value", r.p_value},             {"n_pairs", r.n_pairs},
              {"excluded_pairs", r.excluded_pairs}, {"rejected", r.rejected}};
}

}  // namespace probmatch
