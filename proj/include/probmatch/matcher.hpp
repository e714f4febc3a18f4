#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "probmatch/dataset.hpp"
#include "probmatch/stochastic.hpp"

namespace probmatch {

enum class MatchRegime { binary_bipartite, continuous_nonbipartite };

/// binary_bipartite when every treatment is a point mass in {0,1} or a
/// distribution supported on {0,1}; continuous_nonbipartite otherwise.
MatchRegime detect_regime(const Observations& obs);

/// Units treated under the binary regime: expected treatment >= 0.5.
std::vector<bool> treated_mask(const Observations& obs);

/// Pair admissibility under the caliper and minimum-treatment-difference
/// constraints:
///   Pr(|Z^p_u - Z^p_v| > c_p) < caliper_prob_threshold  for each caliper
///   Pr(|X_u - X_v| < T_min)    <= treatment_prob_threshold
bool admissible(UnitId u, UnitId v, const Observations& obs, const MatchConstraints& constraints,
                const MonteCarloConfig& mc = {});

/// Admissibility of every unordered pair, evaluated once.
class AdmissibilityMask {
 public:
  AdmissibilityMask(const Observations& obs, const MatchConstraints& constraints,
                    const MonteCarloConfig& mc = {});

  bool operator()(UnitId u, UnitId v) const {
    if (u == v) return false;
    if (u > v) std::swap(u, v);
    return ok_[u * n_ + v] != 0;
  }
  std::size_t n_units() const noexcept { return n_; }
  std::size_t count() const;

 private:
  std::size_t n_;
  std::vector<std::uint8_t> ok_;
};

using PairDistance = std::function<double(UnitId, UnitId)>;

struct MatchResult {
  MatchedPairSet pairs;
  /// Units that were candidates but ended up in no pair.
  std::size_t dropped_units = 0;
};

/// Greedy nearest-neighbour matching of treated to control units. Treated
/// units are visited in ascending id; each takes the admissible control with
/// the smallest distance (ties: smaller id). Without replacement a chosen
/// control is removed. Treated units without an admissible control are
/// dropped. Fails when either group is empty.
MatchResult match_binary(const Observations& obs, const PairDistance& distance,
                         const MatchConstraints& constraints);
MatchResult match_binary(const Observations& obs, const PairDistance& distance,
                         const MatchConstraints& constraints, const AdmissibilityMask& mask);

/// Greedy nonbipartite matching: admissible unordered pairs are accepted in
/// ascending distance order (ties: lexicographic by (min id, max id)); without
/// replacement a pair touching a used unit is skipped. With replacement each
/// unit contributes the pair with its nearest admissible partner (deduplicated).
/// The unit with the larger expected treatment is stored first. Fails with
/// ErrorCode::no_pairs when no pair is admissible.
MatchResult match_continuous(const Observations& obs, const PairDistance& distance,
                             const MatchConstraints& constraints);
MatchResult match_continuous(const Observations& obs, const PairDistance& distance,
                             const MatchConstraints& constraints, const AdmissibilityMask& mask);

}  // namespace probmatch
