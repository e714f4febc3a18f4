#pragma once

#include <random>
#include <vector>

#include "probmatch/dataset.hpp"
#include "probmatch/stochastic.hpp"

namespace fixture {

inline std::vector<probmatch::StochasticScalar> points(const std::vector<double>& v) {
  std::vector<probmatch::StochasticScalar> out;
  for (double x : v) out.push_back(probmatch::StochasticScalar::point(x));
  return out;
}

inline probmatch::Observations point_obs(const std::vector<double>& x, const std::vector<std::vector<double>>& z) {
  std::vector<std::vector<probmatch::StochasticScalar>> conf;
  for (const auto& row : z) conf.push_back(points(row));
  return probmatch::Observations(points(x), std::move(conf));
}

// n point-mass units with continuous treatment and p confounders.
inline probmatch::Observations random_continuous(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  std::vector<std::vector<double>> z(p, std::vector<double>(n));
  for (std::size_t u = 0; u < n; ++u) {
    x[u] = unif(rng);
    for (std::size_t j = 0; j < p; ++j) z[j][u] = normal(rng) + 0.5 * x[u];
  }
  return point_obs(x, z);
}

// n point-mass units with binary treatment; confounders shift with treatment.
inline probmatch::Observations random_binary(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  std::vector<std::vector<double>> z(p, std::vector<double>(n));
  for (std::size_t u = 0; u < n; ++u) {
    x[u] = coin(rng) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < p; ++j) z[j][u] = normal(rng) * (1.0 + 0.5 * j) + 0.7 * x[u];
  }
  return point_obs(x, z);
}

}  // namespace fixture
