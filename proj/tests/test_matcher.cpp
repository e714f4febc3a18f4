#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "probmatch/distance.hpp"
#include "probmatch/error.hpp"
#include "probmatch/matcher.hpp"

using namespace probmatch;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::internal;
}

PairDistance line_distance(const std::vector<double>& pos) {
  return [pos](UnitId u, UnitId v) { return std::abs(pos[u] - pos[v]); };
}

}  // namespace

TEST_CASE("regime detection") {
  CHECK(detect_regime(fixture::point_obs({0, 1, 1}, {{1, 2, 3}})) == MatchRegime::binary_bipartite);
  CHECK(detect_regime(fixture::point_obs({0, 0.5, 1}, {{1, 2, 3}})) == MatchRegime::continuous_nonbipartite);
  const Observations stoch({StochasticScalar::bernoulli(0.3), StochasticScalar::bernoulli(0.6), StochasticScalar::point(1)},
                           {fixture::points({1, 2, 3})});
  CHECK(detect_regime(stoch) == MatchRegime::binary_bipartite);
  CHECK(treated_mask(stoch) == std::vector<bool>{false, true, true});
}

TEST_CASE("admissible") {
  MatchConstraints c;
  c.min_treatment_diff = 0.1;
  c.treatment_prob_threshold = 0.25;

  const auto obs = fixture::point_obs({0.9, 0.2, 0.2}, {{0, 0, 0}});
  CHECK(admissible(0, 1, obs, c));
  CHECK_FALSE(admissible(1, 2, obs, c));

  const Observations b({StochasticScalar::bernoulli(0.8), StochasticScalar::bernoulli(0.8)}, {fixture::points({0, 0})});
  CHECK_FALSE(admissible(0, 1, b, c));
  c.treatment_prob_threshold = 0.69;
  CHECK(admissible(0, 1, b, c));

  SUBCASE("caliper uses strict probability threshold") {
    MatchConstraints k;
    k.calipers = std::vector<double>{0.5};
    k.caliper_prob_threshold = 0.5;
    const Observations z(fixture::points({0, 1}), {{StochasticScalar::bernoulli(0.5), StochasticScalar::point(0)}});
    // Pr(|Z_u - Z_v| > 0.5) = 0.5, not < 0.5
    CHECK_FALSE(admissible(0, 1, z, k));
    k.caliper_prob_threshold = 0.51;
    CHECK(admissible(0, 1, z, k));
    k.calipers = std::vector<double>{std::numeric_limits<double>::infinity()};
    k.caliper_prob_threshold = 0.0;
    CHECK(admissible(0, 1, z, k));
  }
}

TEST_CASE("match_binary") {
  MatchConstraints c;
  SUBCASE("argmin control") {
    const auto obs = fixture::point_obs({1, 0, 0}, {{0, 2, 0.5}});
    const auto r = match_binary(obs, line_distance({0, 2, 0.5}), c);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == MatchedPair{0, 2});
  }
  SUBCASE("ties go to the lower control id") {
    const auto obs = fixture::point_obs({0, 1, 0}, {{-1, 0, 1}});
    const auto r = match_binary(obs, line_distance({-1, 0, 1}), c);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == MatchedPair{1, 0});
  }
  SUBCASE("caliper excludes every control") {
    MatchConstraints k;
    k.calipers = std::vector<double>{0.1};
    k.caliper_prob_threshold = 0.5;
    const auto obs = fixture::point_obs({1, 0, 0}, {{0, 2, 3}});
    const auto r = match_binary(obs, line_distance({0, 2, 3}), k);
    CHECK(r.pairs.empty());
    CHECK(r.dropped_units == 1);
  }
  SUBCASE("without replacement removes used controls") {
    const auto obs = fixture::point_obs({1, 1, 0, 0}, {{0, 0.1, 0.05, 5}});
    const auto r = match_binary(obs, line_distance({0, 0.1, 0.05, 5}), c);
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0] == MatchedPair{0, 2});
    CHECK(r.pairs[1] == MatchedPair{1, 3});
    CHECK(r.pairs.is_without_replacement());

    MatchConstraints rep;
    rep.with_replacement = true;
    const auto r2 = match_binary(obs, line_distance({0, 0.1, 0.05, 5}), rep);
    REQUIRE(r2.pairs.size() == 2);
    CHECK(r2.pairs[1] == MatchedPair{1, 2});
  }
  SUBCASE("empty group fails") {
    const auto obs = fixture::point_obs({1, 1}, {{0, 1}});
    CHECK(code_of([&] { match_binary(obs, line_distance({0, 1}), c); }) == ErrorCode::no_pairs);
  }
}

TEST_CASE("match_continuous") {
  MatchConstraints c;
  SUBCASE("dominant close pair first") {
    const std::vector<double> pos{0, 0.3, 5, 5.02};
    const auto obs = fixture::point_obs({0.1, 0.9, 0.3, 0.5}, {pos});
    const auto r = match_continuous(obs, line_distance(pos), c);
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0] == MatchedPair{3, 2});
    CHECK(r.pairs[1] == MatchedPair{1, 0});
    std::vector<std::vector<double>> wm(4, std::vector<double>(4));
    for (UnitId u = 0; u < 4; ++u)
      for (UnitId v = 0; v < 4; ++v) wm[u][v] = std::abs(pos[u] - pos[v]);
    CHECK(0.02 + 0.3 == doctest::Approx(oracle::best_perfect_matching(wm)));
  }
  SUBCASE("two units") {
    const auto obs = fixture::point_obs({0.2, 0.4}, {{0, 100}});
    const auto r = match_continuous(obs, line_distance({0, 100}), c);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == MatchedPair{1, 0});
  }
  SUBCASE("no admissible pair") {
    MatchConstraints k;
    k.min_treatment_diff = 0.5;
    k.treatment_prob_threshold = 0.0;
    const auto obs = fixture::point_obs({0.2, 0.3, 0.4}, {{0, 1, 2}});
    CHECK(code_of([&] { match_continuous(obs, line_distance({0, 1, 2}), k); }) == ErrorCode::no_pairs);
  }
  SUBCASE("ties broken lexicographically") {
    const std::vector<double> pos{0, 1, 2, 3};
    const auto obs = fixture::point_obs({0.1, 0.2, 0.3, 0.4}, {pos});
    const auto r = match_continuous(obs, [](UnitId, UnitId) { return 1.0; }, c);
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0] == MatchedPair{1, 0});
    CHECK(r.pairs[1] == MatchedPair{3, 2});
  }
  SUBCASE("with replacement each unit keeps its nearest partner") {
    MatchConstraints rep;
    rep.with_replacement = true;
    const std::vector<double> pos{0, 1, 1.05, 3};
    const auto obs = fixture::point_obs({0.1, 0.9, 0.3, 0.5}, {pos});
    const auto r = match_continuous(obs, line_distance(pos), rep);
    std::set<std::pair<UnitId, UnitId>> got;
    for (const auto& p : r.pairs) got.emplace(std::min(p.treated, p.control), std::max(p.treated, p.control));
    CHECK(got == std::set<std::pair<UnitId, UnitId>>{{0, 1}, {1, 2}, {2, 3}});
    CHECK(got.size() == r.pairs.size());
  }
}

TEST_CASE("matching properties on random instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unif(0, 1);
  // Greedy has no worst-case factor-2 guarantee against the optimum (ratios
  // slightly above 2 occur on about 0.5% of random line instances), so the
  // bound is checked as a rate.
  int over_bound = 0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 2 * (2 + t % 3);  // 4, 6, 8
    std::vector<double> x(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = unif(rng);
      z[i] = unif(rng);
    }
    const auto obs = fixture::point_obs(x, {z});
    const PairDistanceCache cache(obs, CovarianceTransform::identity(1), DistanceKind::deterministic, 100);
    const WeightMatrix w({1.0});
    const PairDistance dist = [&](UnitId u, UnitId v) { return unit_distance(u, v, cache, w, 1e-6); };

    MatchConstraints c;
    const auto r = match_continuous(obs, dist, c);
    CHECK(r.pairs.is_without_replacement());
    CHECK(r.pairs.size() == n / 2);
    double total = 0;
    for (const auto& p : r.pairs) {
      CHECK(p.treated != p.control);
      CHECK(x[p.treated] >= x[p.control]);
      total += dist(p.treated, p.control);
    }
    CHECK(total >= 0);

    // sanity bound against the exhaustive optimum, on a metric distance
    const auto metric = line_distance(z);
    const auto rm = match_continuous(obs, metric, c);
    double greedy = 0;
    for (const auto& p : rm.pairs) greedy += metric(p.treated, p.control);
    std::vector<std::vector<double>> wm(n, std::vector<double>(n, 0.0));
    for (UnitId u = 0; u < n; ++u)
      for (UnitId v = 0; v < n; ++v)
        if (u != v) wm[u][v] = metric(u, v);
    const double best = oracle::best_perfect_matching(wm);
    CHECK(greedy >= best - 1e-12);
    if (greedy > 2 * best + 1e-9) ++over_bound;

    CHECK(match_continuous(obs, dist, c).pairs == r.pairs);

    // Tightening T_min shrinks the admissible set. The greedy pair count
    // itself is not monotone: removing one pair can free two units.
    std::size_t last = n * n;
    for (double tmin : {0.0, 0.1, 0.2, 0.4, 0.6}) {
      MatchConstraints k;
      k.min_treatment_diff = tmin;
      k.treatment_prob_threshold = 0.0;
      const AdmissibilityMask mask(obs, k);
      CHECK(mask.count() <= last);
      last = mask.count();
      try {
        const auto rk = match_continuous(obs, dist, k);
        CHECK(rk.pairs.size() <= mask.count());
        for (const auto& p : rk.pairs) CHECK(admissible(p.treated, p.control, obs, k));
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::no_pairs);
        CHECK(mask.count() == 0);
      }
    }
  }
  CHECK(over_bound <= trials / 50);
}

TEST_CASE("admissibility mask agrees with admissible") {
  std::vector<StochasticScalar> x, z;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int i = 0; i < 10; ++i) {
    x.push_back(StochasticScalar::bernoulli(unif(rng)));
    z.push_back(StochasticScalar::discrete({0, 1, 2}, {0.2, 0.3, 0.5}));
  }
  z[3] = StochasticScalar::point(0);
  MatchConstraints c;
  c.min_treatment_diff = 0.5;
  c.treatment_prob_threshold = 0.6;
  c.calipers = std::vector<double>{1.0};
  c.caliper_prob_threshold = 0.4;
  const Observations obs(x, {z});
  const AdmissibilityMask mask(obs, c);
  for (UnitId u = 0; u < 10; ++u)
    for (UnitId v = 0; v < 10; ++v)
      if (u != v) CHECK(mask(u, v) == admissible(u, v, obs, c));
}
