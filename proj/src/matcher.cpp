#include "probmatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <tuple>

#include "probmatch/error.hpp"

namespace probmatch {

namespace {

bool binary_cell(const StochasticScalar& s) {
  for (const double v : s.values())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

std::uint64_t pair_stream(UnitId u, UnitId v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) ^ static_cast<std::uint64_t>(v);
}

double prob_diff_below(const StochasticScalar& a, const StochasticScalar& b, double t, const MonteCarloConfig& mc) {
  if (a.is_point() && b.is_point()) return std::abs(a.value() - b.value()) < t ? 1.0 : 0.0;
  return prob_less_than(diff_abs_distribution(a, b, mc), t);
}

double prob_diff_above(const StochasticScalar& a, const StochasticScalar& b, double t, const MonteCarloConfig& mc) {
  if (a.is_point() && b.is_point()) return std::abs(a.value() - b.value()) > t ? 1.0 : 0.0;
  return prob_greater_than(diff_abs_distribution(a, b, mc), t);
}

}  // namespace

MatchRegime detect_regime(const Observations& obs) {
  const auto& x = obs.treatment();
  const bool binary = std::all_of(x.begin(), x.end(), binary_cell);
  return binary ? MatchRegime::binary_bipartite : MatchRegime::continuous_nonbipartite;
}

std::vector<bool> treated_mask(const Observations& obs) {
  std::vector<bool> treated(obs.n_units());
  for (UnitId u = 0; u < obs.n_units(); ++u) treated[u] = mean(obs.treatment(u)) >= 0.5;
  return treated;
}

bool admissible(UnitId u, UnitId v, const Observations& obs, const MatchConstraints& constraints,
                const MonteCarloConfig& mc) {
  if (u == v) return false;
  const auto stream_mc = mc.with_stream(pair_stream(u, v));
  if (constraints.calipers) {
    for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
      const double c = (*constraints.calipers)[p];
      if (!std::isfinite(c)) continue;
      const double pr = prob_diff_above(obs.confounder(p, u), obs.confounder(p, v), c, stream_mc);
      if (!(pr < constraints.caliper_prob_threshold)) return false;
    }
  }
  if (constraints.min_treatment_diff > 0.0) {
    const double pr =
        prob_diff_below(obs.treatment(u), obs.treatment(v), constraints.min_treatment_diff, stream_mc);
    if (pr > constraints.treatment_prob_threshold) return false;
  }
  return true;
}

AdmissibilityMask::AdmissibilityMask(const Observations& obs, const MatchConstraints& constraints,
                                     const MonteCarloConfig& mc)
    : n_(obs.n_units()), ok_(n_ * n_, 0) {
  constraints.validate(obs.n_confounders());
  for (UnitId u = 0; u + 1 < n_; ++u)
    for (UnitId v = u + 1; v < n_; ++v) ok_[u * n_ + v] = admissible(u, v, obs, constraints, mc) ? 1 : 0;
}

std::size_t AdmissibilityMask::count() const {
  return static_cast<std::size_t>(std::count(ok_.begin(), ok_.end(), std::uint8_t{1}));
}

MatchResult match_binary(const Observations& obs, const PairDistance& distance, const MatchConstraints& constraints) {
  return match_binary(obs, distance, constraints, AdmissibilityMask(obs, constraints));
}

MatchResult match_binary(const Observations& obs, const PairDistance& distance, const MatchConstraints& constraints,
                         const AdmissibilityMask& mask) {
  if (detect_regime(obs) != MatchRegime::binary_bipartite)
    fail(ErrorCode::invalid_argument, "binary matching needs treatments supported on {0,1}");
  const auto treated = treated_mask(obs);
  std::vector<UnitId> treated_ids, control_ids;
  for (UnitId u = 0; u < obs.n_units(); ++u) (treated[u] ? treated_ids : control_ids).push_back(u);
  if (treated_ids.empty()) fail(ErrorCode::no_pairs, "empty treated group");
  if (control_ids.empty()) fail(ErrorCode::no_pairs, "empty control group");

  MatchResult result;
  std::vector<bool> used(obs.n_units(), false);
  for (const UnitId t : treated_ids) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<UnitId> best_c;
    for (const UnitId c : control_ids) {
      if (used[c] || !mask(t, c)) continue;
      const double d = distance(t, c);
      if (d < best || !best_c) {
        best = d;
        best_c = c;
      }
    }
    if (!best_c) {
      ++result.dropped_units;
      continue;
    }
    result.pairs.add(t, *best_c);
    if (!constraints.with_replacement) used[*best_c] = true;
  }
  return result;
}

MatchResult match_continuous(const Observations& obs, const PairDistance& distance,
                             const MatchConstraints& constraints) {
  return match_continuous(obs, distance, constraints, AdmissibilityMask(obs, constraints));
}

MatchResult match_continuous(const Observations& obs, const PairDistance& distance,
                             const MatchConstraints& constraints, const AdmissibilityMask& mask) {
  const std::size_t n = obs.n_units();
  if (n < 2) fail(ErrorCode::invalid_argument, "matching needs at least 2 units");
  const auto x_mean = obs.treatment_means();
  auto oriented = [&](UnitId a, UnitId b) {
    // larger expected treatment takes the treated role; ties keep id order
    return x_mean[b] > x_mean[a] ? MatchedPair{b, a} : MatchedPair{a, b};
  };

  MatchResult result;
  std::vector<bool> used(n, false);

  if (constraints.with_replacement) {
    std::vector<std::pair<UnitId, UnitId>> chosen;
    for (UnitId u = 0; u < n; ++u) {
      double best = std::numeric_limits<double>::infinity();
      std::optional<UnitId> best_v;
      for (UnitId v = 0; v < n; ++v) {
        if (!mask(u, v)) continue;
        const double d = distance(std::min(u, v), std::max(u, v));
        if (!best_v || d < best || (d == best && v < *best_v)) {
          best = d;
          best_v = v;
        }
      }
      if (best_v) chosen.emplace_back(std::min(u, *best_v), std::max(u, *best_v));
    }
    if (chosen.empty()) fail(ErrorCode::no_pairs, "no admissible pairs");
    std::set<std::pair<UnitId, UnitId>> seen;
    for (const auto& pr : chosen) {
      if (!seen.insert(pr).second) continue;
      const auto oriented_pair = oriented(pr.first, pr.second);
      result.pairs.add(oriented_pair.treated, oriented_pair.control);
      used[pr.first] = used[pr.second] = true;
    }
  } else {
    struct Candidate {
      double d;
      UnitId u;
      UnitId v;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(n * (n - 1) / 2);
    for (UnitId u = 0; u + 1 < n; ++u)
      for (UnitId v = u + 1; v < n; ++v)
        if (mask(u, v)) candidates.push_back({distance(u, v), u, v});
    if (candidates.empty()) fail(ErrorCode::no_pairs, "no admissible pairs");
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(a.d, a.u, a.v) < std::tie(b.d, b.u, b.v);
    });
    for (const auto& c : candidates) {
      if (used[c.u] || used[c.v]) continue;
      used[c.u] = used[c.v] = true;
      const auto pr = oriented(c.u, c.v);
      result.pairs.add(pr.treated, pr.control);
    }
  }
  result.dropped_units = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return result;
}

}  // namespace probmatch
