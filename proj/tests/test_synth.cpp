#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "probmatch/error.hpp"
#include "probmatch/stats.hpp"
#include "probmatch/synth.hpp"

using namespace probmatch;
using namespace probmatch::synth;

namespace {

double correlation(std::span<const double> a, std::span<const double> b) {
  const double ma = stats::mean(a), mb = stats::mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double accuracy(const NoisyBinary& s) {
  int ok = 0;
  for (std::size_t i = 0; i < s.truth.size(); ++i) ok += s.truth[i] == s.noisy[i];
  return ok / double(s.truth.size());
}

std::vector<double> as_double(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("gaussian classes") {
  GaussianClassConfig cfg;
  const auto a = gen_gaussian_classes(cfg, 100, 5);
  const auto b = gen_gaussian_classes(cfg, 100, 5);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(std::accumulate(a.labels.begin(), a.labels.end(), 0) == 50);
  CHECK(a.features.cols() == 2);

  GaussianClassConfig bad;
  bad.sigma2 = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = GaussianClassConfig{};
  bad.n_train = 1;
  CHECK_THROWS_AS(bad.validate(), Error);

  SUBCASE("noise sweep grid") {
    for (int i = 0; i <= 5; ++i) {
      GaussianClassConfig c;
      c.sigma2 = 1.0 + 0.2 * i;
      CHECK_NOTHROW(c.validate());
      const auto d = gen_gaussian_classes(c, 2000, 1);
      std::vector<double> neg;
      for (Eigen::Index r = 0; r < d.features.rows(); ++r)
        if (d.labels[r] == 0) neg.push_back(d.features(r, 0));
      CHECK(std::sqrt(stats::sample_variance(neg)) == doctest::Approx(c.sigma2).epsilon(0.1));
      CHECK(stats::mean(neg) == doctest::Approx(-1).epsilon(0.15));
    }
  }
}

TEST_CASE("classifier with calibration") {
  SUBCASE("near-separable classes") {
    GaussianClassConfig cfg;
    cfg.sigma1 = cfg.sigma2 = 0.01;
    const auto train = gen_gaussian_classes(cfg, 400, 1);
    const auto clf = fit_classifier_with_calibration(train.features, train.labels, 2);
    const auto study = study_from_classifier(cfg, clf, 3);
    CHECK(accuracy(study) > 0.99);
    int confident = 0;
    for (Eigen::Index r = 0; r < train.features.rows(); ++r) {
      const double p = clf.probability(train.features.row(r));
      confident += (train.labels[r] == 1 ? p : 1 - p) > 0.9;
    }
    CHECK(confident >= 0.95 * train.features.rows());
  }

  SUBCASE("label flip complements probabilities") {
    GaussianClassConfig cfg;
    const auto train = gen_gaussian_classes(cfg, 400, 7);
    std::vector<int> flipped;
    for (int l : train.labels) flipped.push_back(1 - l);
    const auto a = fit_classifier_with_calibration(train.features, train.labels, 8);
    const auto b = fit_classifier_with_calibration(train.features, flipped, 8);
    CHECK(a.scorer.weights.dot(b.scorer.weights) < 0);
    for (Eigen::Index r = 0; r < 50; ++r)
      CHECK(std::abs(a.probability(train.features.row(r)) + b.probability(train.features.row(r)) - 1) <= 0.05);
  }

  SUBCASE("sigmoid calibration is monotone") {
    const std::vector<double> s{-2, -1, 1, 2};
    const std::vector<int> l{0, 0, 1, 1};
    const auto cal = fit_sigmoid_calibration(s, l);
    double last = 0;
    for (double x = -3; x <= 3; x += 0.25) {
      const double p = cal.probability(x);
      CHECK(p > last);
      CHECK(p < 1.0);
      last = p;
    }
  }

  CHECK_THROWS_AS(fit_classifier_with_calibration(Eigen::MatrixXd::Zero(4, 2), std::vector<int>{1, 1, 1, 1}, 0), Error);
}

TEST_CASE("study from classifier") {
  GaussianClassConfig cfg;
  double lo = 1, hi = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto train = gen_gaussian_classes(cfg, cfg.n_train, seed);
    const auto clf = fit_classifier_with_calibration(train.features, train.labels, seed + 1000);
    const auto s = study_from_classifier(cfg, clf, seed + 2000);
    lo = std::min(lo, accuracy(s));
    hi = std::max(hi, accuracy(s));
    for (double p : s.probability) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    if (seed == 0) {
      const auto dist = s.distribution();
      CHECK(mean(dist[0]) == doctest::Approx(s.probability[0]));
    }
  }
  CHECK(lo >= 0.85);
  CHECK(hi <= 0.99);

  SUBCASE("reliability") {
    GaussianClassConfig big = cfg;
    big.n_study = 4000;
    const auto train = gen_gaussian_classes(big, big.n_train, 1);
    const auto clf = fit_classifier_with_calibration(train.features, train.labels, 2);
    const auto s = study_from_classifier(big, clf, 3);
    int n = 0, pos = 0;
    for (std::size_t i = 0; i < s.probability.size(); ++i)
      if (s.probability[i] >= 0.6 && s.probability[i] <= 0.7) {
        ++n;
        pos += s.truth[i];
      }
    REQUIRE(n >= 30);
    CHECK(pos / double(n) >= 0.5);
    CHECK(pos / double(n) <= 0.8);
  }
}

TEST_CASE("scenario generators") {
  std::vector<double> l(1000);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = i % 2;

  SUBCASE("treatment scenario") {
    const auto none = gen_scenario_treatment(l, 0, 0, 1);
    CHECK(std::abs(correlation(l, none.z1)) < 0.1);
    const auto exact = gen_scenario_treatment(l, 0.4, 0.6, 1, 0.0, 0.0);
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(exact.z1[i] == 0.4 * l[i]);
    const auto s = gen_scenario_treatment(l, 0.3, 0.8, 2);
    std::vector<double> e2(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) e2[i] = s.z2[i] - 0.8 * l[i];
    CHECK(stats::sample_variance(e2) == doctest::Approx(2.0).epsilon(0.15));
  }

  SUBCASE("confounder scenario") {
    const auto sat = gen_scenario_confounder(1000, -20, 1, 3);
    CHECK(std::accumulate(sat.l.begin(), sat.l.end(), 0) <= 1);
    const auto half = gen_scenario_confounder(1000, 0, 0, 4);
    CHECK(stats::mean(as_double(half.l)) == doctest::Approx(0.5).epsilon(0.1));
    const auto pos = gen_scenario_confounder(1000, -2, 4, 5);
    CHECK(correlation(pos.x, as_double(pos.l)) > 0);
    for (double x : pos.x) {
      CHECK(x >= 0);
      CHECK(x <= 1);
    }
  }

  SUBCASE("outcome") {
    const std::vector<std::vector<double>> z{std::vector<double>(l.size(), 2.0)};
    const std::vector<double> zero{0, 0};
    for (double y : gen_outcome(l, z, zero, 1, false)) CHECK(y == 0);
    const std::vector<double> b0{1, 0};
    CHECK(gen_outcome(l, z, b0, 1, false) == l);

    std::vector<double> big(2000, 0.0);
    const std::vector<std::vector<double>> zb{std::vector<double>(2000, 0.0)};
    CHECK(stats::sample_variance(gen_outcome(big, zb, zero, 9)) == doctest::Approx(16.0 / 12 + 1).epsilon(0.15));

    const std::vector<double> b1{0.3, 0.5}, b2{0.8, 0.5};
    const auto y1 = gen_outcome(l, z, b1, 6), y2 = gen_outcome(l, z, b2, 6);
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(y2[i] - y1[i] == doctest::Approx(0.5 * l[i]));
  }
}

TEST_CASE("location study") {
  const auto mob = MobilityModel::standard();
  CHECK_NOTHROW(ConfusionMatrix::standard().validate());
  const auto std_row = ConfusionMatrix::standard().rows[static_cast<std::size_t>(Location::entertainment)];
  CHECK(std_row[static_cast<std::size_t>(Location::entertainment)] == doctest::Approx(0.41));
  CHECK(std_row[static_cast<std::size_t>(Location::home)] == 0.0);

  SUBCASE("identity confusion") {
    const auto s = gen_location_study(50, mob, ConfusionMatrix::identity(), 1);
    for (std::size_t d = 0; d < 50; ++d) {
      CHECK(s.noisy[d] == s.truth[d]);
      REQUIRE(s.distribution[d].is_point());
      CHECK(s.distribution[d].value() == doctest::Approx(s.truth[d]));
    }
  }

  SUBCASE("entertainment predictions all come from food") {
    auto c = ConfusionMatrix::identity();
    const auto ent = static_cast<std::size_t>(Location::entertainment);
    const auto food = static_cast<std::size_t>(Location::food);
    c.rows[ent] = {};
    c.rows[ent][food] = 1.0;
    c.rows[food] = {};
    c.rows[food][food] = 0.5;
    c.rows[food][ent] = 0.5;
    const auto s = gen_location_study(100, mob, c, 2);
    int predicted = 0;
    for (std::size_t d = 0; d < 100; ++d)
      for (std::size_t h = 0; h < 24; ++h)
        if (s.predicted_labels[d][h] == ent) {
          ++predicted;
          CHECK(s.true_labels[d][h] != ent);
        }
    CHECK(predicted > 0);
  }

  SUBCASE("poisson-binomial mean") {
    const auto conf = ConfusionMatrix::standard();
    const auto s = gen_location_study(20, mob, conf, 3);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif;
    for (std::size_t d = 0; d < 20; ++d) {
      std::vector<double> hourly;
      for (std::size_t h = 0; h < 24; ++h)
        hourly.push_back(conf.rows[s.predicted_labels[d][h]][static_cast<std::size_t>(Location::entertainment)]);
      const double expected = std::accumulate(hourly.begin(), hourly.end(), 0.0) / 24;
      CHECK(mean(s.distribution[d]) == doctest::Approx(expected).epsilon(1e-12));
      if (d < 3) {
        double total = 0;
        const int draws = 100000;
        for (int i = 0; i < draws; ++i)
          for (double p : hourly) total += unif(rng) < p;
        CHECK(std::abs(total / draws / 24 - expected) < 0.002);
      }
      CHECK(s.distribution[d].max() <= 1.0);
    }
  }

  SUBCASE("invalid confusion") {
    auto c = ConfusionMatrix::standard();
    c.rows[0][0] += 0.1;
    CHECK_THROWS_AS(gen_location_study(5, mob, c, 1), Error);
  }
}

TEST_CASE("social analog") {
  SocialAnalogConfig cfg;
  cfg.n_users = 4000;
  const auto s = gen_social_analog(cfg, 11);
  int spam = 0, spam_ok = 0, ham = 0, ham_ok = 0;
  for (std::size_t i = 0; i < s.spammer.truth.size(); ++i) {
    if (s.spammer.truth[i]) {
      ++spam;
      spam_ok += s.spammer.noisy[i] == 1;
    } else {
      ++ham;
      ham_ok += s.spammer.noisy[i] == 0;
    }
  }
  CHECK(spam_ok / double(spam) == doctest::Approx(0.76).epsilon(0.06));
  CHECK(ham_ok / double(ham) == doctest::Approx(0.82).epsilon(0.06));
  CHECK(spam / double(cfg.n_users) == doctest::Approx(0.3).epsilon(0.1));
  CHECK(s.others.size() == 3);
  for (double t : s.treatment) {
    CHECK(t > 0);
    CHECK(t < 1);
  }
  const auto again = gen_social_analog(cfg, 11);
  CHECK(again.outcome == s.outcome);
}
