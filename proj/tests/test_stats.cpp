#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "probmatch/analysis.hpp"
#include "probmatch/error.hpp"
#include "probmatch/stats.hpp"

using namespace probmatch;

TEST_CASE("descriptive statistics") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(stats::mean(v) == 2.5);
  CHECK(stats::sample_variance(v) == doctest::Approx(5.0 / 3.0));
  CHECK(stats::median(v) == 2.5);
  CHECK(stats::max(v) == 4);
  CHECK(stats::sample_quantiles(std::vector<double>{1, 2, 3, 4, 5}, 1) == std::vector<double>{3});
  CHECK(stats::average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("wilcoxon signed rank") {
  SUBCASE("all positive, n = 6") {
    const auto r = stats::wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(r.exact);
    CHECK(r.statistic == 21);
    CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-12));
  }
  SUBCASE("symmetric samples") {
    const auto r = stats::wilcoxon_signed_rank(std::vector<double>{-2, -1, 1, 2, -3, 3});
    CHECK(r.p_value == doctest::Approx(1.0));
  }
  SUBCASE("zeros dropped and mu0 honoured") {
    const auto r = stats::wilcoxon_signed_rank(std::vector<double>{5, 6, 7, 8, 9, 10, 5}, 5);
    CHECK(r.n_nonzero == 5);
    CHECK(r.p_value == doctest::Approx(0.0625));
  }
  SUBCASE("too few nonzero differences") {
    CHECK_THROWS_AS(stats::wilcoxon_signed_rank(std::vector<double>{1, 0, 0, 2, 3}), Error);
  }
  SUBCASE("scale invariance") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.3, 1);
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = normal(rng);
      b[i] = 3.7 * a[i];
    }
    const auto ra = stats::wilcoxon_signed_rank(a), rb = stats::wilcoxon_signed_rank(b);
    CHECK(ra.statistic == rb.statistic);
    CHECK(ra.p_value == rb.p_value);
  }
  SUBCASE("exact path matches brute-force enumeration, ties included") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> pick(-6, 6);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> x;
      while (x.size() < 9) {
        const int v = pick(rng);
        if (v != 0) x.push_back(v);
      }
      const auto r = stats::wilcoxon_signed_rank(x);
      std::vector<double> mag;
      for (double e : x) mag.push_back(std::abs(e));
      const auto ranks = stats::average_ranks(mag);
      double w = 0;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0) w += ranks[i];
      CHECK(r.statistic == doctest::Approx(w));
      CHECK(r.p_value == doctest::Approx(std::min(1.0, oracle::wilcoxon_exact(ranks, w))).epsilon(1e-12));
    }
  }
  SUBCASE("exact and normal paths agree at n = 12") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal(0.4, 1);
    double worst = 0;
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x(12);
      for (double& e : x) e = normal(rng);
      const auto r = stats::wilcoxon_signed_rank(x);
      REQUIRE(r.exact);
      std::vector<double> mag;
      for (double e : x) mag.push_back(std::abs(e));
      const auto ranks = stats::average_ranks(mag);
      worst = std::max(worst, std::abs(stats::wilcoxon_exact_pvalue(ranks, r.statistic) -
                                       stats::wilcoxon_normal_pvalue(ranks, r.statistic)));
    }
    CHECK(worst <= 0.02);
  }
}

TEST_CASE("kolmogorov-smirnov") {
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back(i);
    b.push_back(50 + i);
  }
  const auto r = stats::ks_two_sample(a, b);
  CHECK(r.statistic == doctest::Approx(0.5).epsilon(1e-12));
  // lambda = (sqrt(50) + 0.12 + 0.11 / sqrt(50)) * 0.5
  const double en = std::sqrt(50.0);
  const double lambda = (en + 0.12 + 0.11 / en) * 0.5;
  CHECK(r.p_value == doctest::Approx(stats::kolmogorov_survival(lambda)).epsilon(1e-9));
  CHECK(r.p_value < 0.01);
  CHECK(stats::ks_two_sample(a, a).p_value == doctest::Approx(1.0));
  CHECK(stats::kolmogorov_survival(0.0) == 1.0);
  CHECK(stats::kolmogorov_survival(1.36) == doctest::Approx(0.0494).epsilon(1e-2));
}

TEST_CASE("paired t-test") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
  CHECK(stats::paired_t_pvalue(a, b) == 1.0);
  const std::vector<double> c{2, 3, 4, 5};
  CHECK(stats::paired_t_pvalue(c, a) == 0.0);
  // differences [1, 2, 3]: t = 2 / (1 / sqrt(3)) = 3.4641, df = 2
  const std::vector<double> d{1, 2, 3}, z{0, 0, 0};
  CHECK(stats::paired_t_pvalue(d, z) == doctest::Approx(0.07417990).epsilon(1e-6));
}

TEST_CASE("smd") {
  const std::vector<double> u{1, 2, 3}, v{2, 3, 4};
  CHECK(std::abs(smd(u, v) - 1.0) <= 1e-9);
  CHECK(smd(v, u) == smd(u, v));
  CHECK(smd(u, u) == 0.0);
  const std::vector<double> ones{1, 1, 1, 1}, zeros{0, 0, 0, 0};
  CHECK(std::isinf(smd(ones, zeros)));
  CHECK(smd(ones, ones) == 0.0);
  CHECK_THROWS_AS(smd(std::vector<double>{1}, std::vector<double>{2}), Error);
}

TEST_CASE("ate and causal test") {
  const MatchedPairSet g({{0, 1}, {2, 3}});
  SUBCASE("binary treatment") {
    const std::vector<double> y{3, 1, 5, 1}, x{1, 0, 1, 0};
    const auto e = ate(g, y, x);
    CHECK(e.estimate == 3);
    CHECK(e.ratios == std::vector<double>{2, 4});
  }
  SUBCASE("equal outcomes") {
    const std::vector<double> y{1, 1, 2, 2}, x{1, 0, 1, 0};
    CHECK(ate(g, y, x).estimate == 0);
  }
  SUBCASE("signed ratios") {
    const std::vector<double> y{1, 0, -1, 0}, x{0.5, 0, -0.5, 0};
    CHECK(ate(g, y, x).estimate == 2);
  }
  SUBCASE("zero denominators are excluded") {
    const std::vector<double> y{3, 1, 5, 1}, x{1, 0, 1, 1};
    const auto e = ate(g, y, x);
    CHECK(e.excluded_pairs == 1);
    CHECK(e.estimate == 2);
    const std::vector<double> same{1, 1, 1, 1};
    CHECK_THROWS_AS(ate(g, y, same), Error);
  }
  SUBCASE("antisymmetric under role swap") {
    const std::vector<double> y{3, 1, 5, 2}, x{0.9, 0.1, 0.7, 0.2};
    const MatchedPairSet swapped({{1, 0}, {3, 2}});
    CHECK(ate(swapped, y, x).estimate == doctest::Approx(ate(g, y, x).estimate));
    // swap only y/x roles
    const std::vector<double> ny{1, 3, 2, 5};
    CHECK(ate(g, ny, x).estimate == doctest::Approx(-ate(g, y, x).estimate));
  }

  SUBCASE("strong effect is detected, alpha = 0 never rejects") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0, 0.1);
    std::vector<double> y, x;
    MatchedPairSet pairs;
    for (UnitId i = 0; i < 50; ++i) {
      x.push_back(1);
      y.push_back(1 + noise(rng));
      x.push_back(0);
      y.push_back(noise(rng));
      pairs.add(2 * i, 2 * i + 1);
    }
    CHECK(causal_test(pairs, y, x, 0.05).rejected);
    CHECK_FALSE(causal_test(pairs, y, x, 0.0).rejected);
  }

  SUBCASE("pure noise rejects at about alpha") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise;
    int rejected = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
      std::vector<double> y, x;
      MatchedPairSet pairs;
      for (UnitId i = 0; i < 50; ++i) {
        x.push_back(1);
        y.push_back(noise(rng));
        x.push_back(0);
        y.push_back(noise(rng));
        pairs.add(2 * i, 2 * i + 1);
      }
      rejected += causal_test(pairs, y, x, 0.05).rejected;
    }
    CHECK(std::abs(rejected / double(reps) - 0.05) <= 0.02);
  }
}

TEST_CASE("balance report") {
  const auto obs = fixture::point_obs({1, 0, 1, 0, 1, 0}, {{1, 1, 2, 2, 3, 3}, {5, 5, 6, 6, 7, 7}});
  const StudyDataset ds(obs, std::vector<double>{1, 0, 1, 0, 1, 0});
  MatchResult m{MatchedPairSet({{0, 1}, {2, 3}, {4, 5}}), 0};
  const auto r = balance_report(m, ds, false, 5);
  REQUIRE(r.confounders.size() == 2);
  CHECK(r.pair_count == 3);
  CHECK_FALSE(r.used_truth);
  for (const auto& c : r.confounders) {
    CHECK(c.smd == 0.0);
    CHECK(c.ks_pvalue == doctest::Approx(1.0));
    CHECK(c.t_pvalue == doctest::Approx(1.0));
    CHECK(c.quantile_gaps == std::vector<double>(5, 0.0));
  }
  CHECK_THROWS_AS(balance_report(m, ds, true), Error);

  const auto j = to_json(r);
  CHECK(j["confounders"][0]["smd"] == 0.0);
  CHECK(j["pair_count"] == 3);

  SUBCASE("truth columns are used when requested") {
    GroundTruth t{{1, 0, 1, 0, 1, 0}, {{1, 0, 2, 0, 3, 0}, {5, 5, 6, 6, 7, 7}}};
    const StudyDataset with_truth(obs, std::nullopt, t);
    const auto rt = balance_report(m, with_truth, true, 5);
    CHECK(rt.used_truth);
    CHECK(rt.confounders[0].smd > 1.0);
    CHECK(rt.confounders[1].smd == 0.0);
  }
}
