#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace probmatch {

/// Policy for derived distributions (differences, ratios). When the product
/// of the two support sizes is at most `exact_limit`, the result is obtained
/// by exact enumeration; otherwise `n_samples` seeded draws are returned as
/// an empirical distribution. `stream` distinguishes independent draws that
/// share a seed (e.g. one stream per unit pair).
struct MonteCarloConfig {
  std::size_t exact_limit = 10'000;
  std::size_t n_samples = 2'000;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  MonteCarloConfig with_stream(std::uint64_t s) const {
    MonteCarloConfig c = *this;
    c.stream = s;
    return c;
  }
};

/// A scalar that is either known exactly, known as a finite discrete
/// distribution, or represented by an empirical sample.
class StochasticScalar {
 public:
  enum class Kind { point_mass, discrete, empirical };

  StochasticScalar() : StochasticScalar(point(0.0)) {}

  static StochasticScalar point(double value);
  /// Validates: support strictly increasing and finite, probabilities
  /// nonnegative and summing to one within 1e-9.
  static StochasticScalar discrete(std::vector<double> support,
                                   std::vector<double> probs);
  static StochasticScalar bernoulli(double p);
  /// Samples are stored sorted. At least one finite sample is required.
  static StochasticScalar empirical(std::vector<double> samples);
  /// Builds a distribution from unordered (value, probability) atoms, merging
  /// values equal up to 1e-12 relative and dropping zero-mass atoms. A single
  /// remaining atom collapses to a point mass.
  static StochasticScalar from_atoms(std::vector<std::pair<double, double>> atoms);

  Kind kind() const noexcept { return kind_; }
  bool is_point() const noexcept { return kind_ == Kind::point_mass; }

  /// Point value; only meaningful for point masses.
  double value() const noexcept { return values_.front(); }
  /// Support points (discrete), sorted samples (empirical) or the single value.
  std::span<const double> values() const noexcept { return values_; }
  /// Probabilities; empty for point masses and empirical distributions.
  std::span<const double> probs() const noexcept { return probs_; }

  std::size_t size() const noexcept { return values_.size(); }
  double weight(std::size_t i) const noexcept;

  double min() const noexcept { return values_.front(); }
  double max() const noexcept { return values_.back(); }

  template <class Rng>
  double sample(Rng& rng) const {
    switch (kind_) {
      case Kind::point_mass:
        return values_.front();
      case Kind::empirical: {
        std::uniform_int_distribution<std::size_t> pick(0, values_.size() - 1);
        return values_[pick(rng)];
      }
      case Kind::discrete:
        break;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double r = unif(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      acc += probs_[i];
      if (r < acc) return values_[i];
    }
    return values_.back();
  }

  friend bool operator==(const StochasticScalar&, const StochasticScalar&) = default;

 private:
  StochasticScalar(Kind kind, std::vector<double> values, std::vector<double> probs)
      : kind_(kind), values_(std::move(values)), probs_(std::move(probs)) {}

  Kind kind_;
  std::vector<double> values_;
  std::vector<double> probs_;
};

/// K quantiles at probability levels k/(K+1), k = 1..K.
struct QuantileVector {
  std::vector<double> values;

  std::size_t k_count() const noexcept { return values.size(); }
};

inline constexpr int kDefaultQuantileCount = 100;

/// Probability level of the k-th of K quantiles (k is 1-based).
inline double quantile_level(int k, int count) {
  return static_cast<double>(k) / static_cast<double>(count + 1);
}

/// Left-continuous generalized inverse CDF at levels k/(K+1).
QuantileVector quantiles(const StochasticScalar& s, int count);

/// Distribution of |A - B| for independent A, B.
StochasticScalar diff_abs_distribution(const StochasticScalar& a,
                                       const StochasticScalar& b,
                                       const MonteCarloConfig& mc);

/// Distribution of num / max(den, epsilon) for independent nonnegative inputs.
StochasticScalar ratio_distribution(const StochasticScalar& num,
                                    const StochasticScalar& den,
                                    double epsilon,
                                    const MonteCarloConfig& mc = {});

/// Pr(S < t).
double prob_less_than(const StochasticScalar& s, double t);
/// Pr(S > t).
double prob_greater_than(const StochasticScalar& s, double t);

double mean(const StochasticScalar& s);
double variance(const StochasticScalar& s);

/// Exact distribution of the number of successes among independent Bernoulli
/// trials with the given success probabilities (support 0..n).
std::vector<double> poisson_binomial_pmf(std::span<const double> probs);

/// Deterministic 64-bit mixing of a seed with a sequence of keys; used to
/// derive independent RNG streams from (seed, indices).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

}  // namespace probmatch
