#include "probmatch/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "probmatch/error.hpp"

namespace probmatch {

namespace {

constexpr double kProbTolerance = 1e-9;
constexpr double kMergeTolerance = 1e-12;

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= kMergeTolerance * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class Op>
StochasticScalar combine(const StochasticScalar& a, const StochasticScalar& b,
                         const MonteCarloConfig& mc, Op op) {
  if (a.is_point() && b.is_point()) return StochasticScalar::point(op(a.value(), b.value()));

  if (a.size() * b.size() <= mc.exact_limit) {
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double wa = a.weight(i);
      if (wa == 0.0) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        atoms.emplace_back(op(a.values()[i], b.values()[j]), wa * b.weight(j));
      }
    }
    return StochasticScalar::from_atoms(std::move(atoms));
  }

  std::mt19937_64 rng(derive_seed(mc.seed, {mc.stream}));
  std::vector<double> samples(mc.n_samples);
  for (auto& s : samples) {
    const double x = a.sample(rng);
    const double y = b.sample(rng);
    s = op(x, y);
  }
  return StochasticScalar::empirical(std::move(samples));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (const auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

StochasticScalar StochasticScalar::point(double value) {
  if (!std::isfinite(value)) fail(ErrorCode::invalid_argument, "point mass value is not finite");
  return StochasticScalar(Kind::point_mass, {value}, {});
}

StochasticScalar StochasticScalar::discrete(std::vector<double> support, std::vector<double> probs) {
  if (support.empty()) fail(ErrorCode::invalid_argument, "discrete distribution has empty support");
  if (support.size() != probs.size())
    fail(ErrorCode::invalid_argument, "support and probs differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (!std::isfinite(support[i]) || !std::isfinite(probs[i]))
      fail(ErrorCode::invalid_argument, "non-finite value in discrete distribution");
    if (probs[i] < 0.0) fail(ErrorCode::invalid_argument, "negative probability");
    if (i > 0 && !(support[i] > support[i - 1]))
      fail(ErrorCode::invalid_argument, "support is not strictly increasing");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > kProbTolerance)
    fail(ErrorCode::invalid_argument, "unnormalized distribution (probabilities sum to " +
                                          std::to_string(total) + ")");
  return StochasticScalar(Kind::discrete, std::move(support), std::move(probs));
}

StochasticScalar StochasticScalar::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, "Bernoulli probability outside [0,1]");
  return from_atoms({{0.0, 1.0 - p}, {1.0, p}});
}

StochasticScalar StochasticScalar::empirical(std::vector<double> samples) {
  if (samples.empty()) fail(ErrorCode::invalid_argument, "empirical distribution needs at least one sample");
  for (const double s : samples)
    if (!std::isfinite(s)) fail(ErrorCode::invalid_argument, "non-finite sample");
  std::sort(samples.begin(), samples.end());
  return StochasticScalar(Kind::empirical, std::move(samples), {});
}

StochasticScalar StochasticScalar::from_atoms(std::vector<std::pair<double, double>> atoms) {
  std::sort(atoms.begin(), atoms.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<double> support;
  std::vector<double> probs;
  support.reserve(atoms.size());
  probs.reserve(atoms.size());
  for (const auto& [v, p] : atoms) {
    if (p <= 0.0) continue;
    if (!support.empty() && nearly_equal(support.back(), v)) {
      probs.back() += p;
    } else {
      support.push_back(v);
      probs.push_back(p);
    }
  }
  if (support.empty()) fail(ErrorCode::invalid_argument, "distribution has no positive-mass atom");
  if (support.size() == 1) return point(support.front());
  return discrete(std::move(support), std::move(probs));
}

double StochasticScalar::weight(std::size_t i) const noexcept {
  switch (kind_) {
    case Kind::point_mass:
      return 1.0;
    case Kind::discrete:
      return probs_[i];
    case Kind::empirical:
      return 1.0 / static_cast<double>(values_.size());
  }
  return 0.0;
}

QuantileVector quantiles(const StochasticScalar& s, int count) {
  if (count < 1) fail(ErrorCode::invalid_argument, "quantile count must be >= 1");
  QuantileVector q;
  q.values.resize(static_cast<std::size_t>(count));
  const auto values = s.values();
  switch (s.kind()) {
    case StochasticScalar::Kind::point_mass:
      std::fill(q.values.begin(), q.values.end(), s.value());
      break;
    case StochasticScalar::Kind::empirical: {
      // smallest i with i/n >= k/(K+1), in integer arithmetic
      const auto n = static_cast<std::uint64_t>(values.size());
      const auto den = static_cast<std::uint64_t>(count) + 1;
      for (int k = 1; k <= count; ++k) {
        const std::uint64_t num = static_cast<std::uint64_t>(k) * n;
        std::uint64_t i = (num + den - 1) / den;
        i = std::max<std::uint64_t>(i, 1);
        q.values[static_cast<std::size_t>(k - 1)] = values[i - 1];
      }
      break;
    }
    case StochasticScalar::Kind::discrete: {
      const auto probs = s.probs();
      std::size_t idx = 0;
      double cum = probs[0];
      for (int k = 1; k <= count; ++k) {
        const double level = quantile_level(k, count);
        while (idx + 1 < values.size() && cum < level - kMergeTolerance) {
          ++idx;
          cum += probs[idx];
        }
        q.values[static_cast<std::size_t>(k - 1)] = values[idx];
      }
      break;
    }
  }
  return q;
}

StochasticScalar diff_abs_distribution(const StochasticScalar& a, const StochasticScalar& b,
                                       const MonteCarloConfig& mc) {
  return combine(a, b, mc, [](double x, double y) { return std::abs(x - y); });
}

StochasticScalar ratio_distribution(const StochasticScalar& num, const StochasticScalar& den,
                                    double epsilon, const MonteCarloConfig& mc) {
  if (!(epsilon > 0.0)) fail(ErrorCode::invalid_argument, "epsilon must be positive");
  return combine(num, den, mc,
                 [epsilon](double x, double y) { return x / std::max(y, epsilon); });
}

double prob_less_than(const StochasticScalar& s, double t) {
  const auto values = s.values();
  const auto end = std::lower_bound(values.begin(), values.end(), t);
  const auto n = static_cast<std::size_t>(end - values.begin());
  switch (s.kind()) {
    case StochasticScalar::Kind::point_mass:
      return n == 0 ? 0.0 : 1.0;
    case StochasticScalar::Kind::empirical:
      return static_cast<double>(n) / static_cast<double>(values.size());
    case StochasticScalar::Kind::discrete: {
      const auto probs = s.probs();
      return std::min(1.0, std::accumulate(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(n), 0.0));
    }
  }
  return 0.0;
}

double prob_greater_than(const StochasticScalar& s, double t) {
  const auto values = s.values();
  const auto begin = std::upper_bound(values.begin(), values.end(), t);
  const auto first = static_cast<std::size_t>(begin - values.begin());
  switch (s.kind()) {
    case StochasticScalar::Kind::point_mass:
      return first == 0 ? 1.0 : 0.0;
    case StochasticScalar::Kind::empirical:
      return static_cast<double>(values.size() - first) / static_cast<double>(values.size());
    case StochasticScalar::Kind::discrete: {
      const auto probs = s.probs();
      return std::min(1.0, std::accumulate(probs.begin() + static_cast<std::ptrdiff_t>(first), probs.end(), 0.0));
    }
  }
  return 0.0;
}

double mean(const StochasticScalar& s) {
  double m = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) m += s.weight(i) * s.values()[i];
  return m;
}

double variance(const StochasticScalar& s) {
  const double m = mean(s);
  double v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s.values()[i] - m;
    v += s.weight(i) * d * d;
  }
  return v;
}

std::vector<double> poisson_binomial_pmf(std::span<const double> probs) {
  std::vector<double> pmf(probs.size() + 1, 0.0);
  pmf[0] = 1.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double p = probs[t];
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, "trial probability outside [0,1]");
    for (std::size_t k = t + 1; k > 0; --k) pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
    pmf[0] *= 1.0 - p;
  }
  return pmf;
}

}  // namespace probmatch
