#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "probmatch/dataset.hpp"
#include "probmatch/stochastic.hpp"

namespace probmatch {

/// Diagonal of the positive weight matrix W.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  explicit WeightMatrix(std::vector<double> diag);
  static WeightMatrix identity(std::size_t p) { return WeightMatrix(std::vector<double>(p, 1.0)); }

  std::size_t size() const noexcept { return diag_.size(); }
  std::span<const double> diag() const noexcept { return diag_; }
  double operator[](std::size_t i) const { return diag_[i]; }

  friend bool operator==(const WeightMatrix&, const WeightMatrix&) = default;

 private:
  std::vector<double> diag_;
};

/// Lower-triangular whitening factor F with F^T F = S^{-1}, i.e. F is the
/// inverse of the Cholesky factor of the (regularized) sample covariance S.
class CovarianceTransform {
 public:
  CovarianceTransform() = default;
  explicit CovarianceTransform(Eigen::MatrixXd factor);
  static CovarianceTransform identity(std::size_t p) {
    return CovarianceTransform(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(factor_.rows()); }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

  /// out = F * v
  void apply(std::span<const double> v, std::span<double> out) const;

 private:
  Eigen::MatrixXd factor_;
};

/// Sample covariance (n-1 denominator) of per-unit confounder means.
Eigen::MatrixXd confounder_covariance(const Observations& obs);

/// Whitening factor of the confounder covariance. A ridge of 1e-8 * trace / P
/// is added before factorization; a direction whose variance does not exceed
/// the ridge is reported as singular (ErrorCode::singular).
CovarianceTransform covariance_sqrt(const Observations& obs);
CovarianceTransform covariance_sqrt(const Eigen::MatrixXd& covariance);

/// (1/K) * sqrt(sum_k (a_k - b_k)^2)
double rv_distance(const QuantileVector& a, const QuantileVector& b);

/// sqrt(delta^T F^T W F delta) on signed confounder differences.
double mahalanobis_weighted(std::span<const double> delta, const WeightMatrix& w,
                            const CovarianceTransform& s);

/// Same quadratic form applied to a vector of nonnegative quantile distances.
double prob_mahalanobis(std::span<const double> dvec, const WeightMatrix& w,
                        const CovarianceTransform& s);

/// Which confounder discrepancy enters the weighted distance.
enum class DistanceKind {
  /// signed point differences z_u - z_v (classical weighted Mahalanobis)
  deterministic,
  /// vector of quantile distances D(Z_u^p, Z_v^p)
  probabilistic,
};

/// Precomputed per-pair quantities for one dataset. Built once; read-only
/// afterwards. For every unordered pair it keeps the treatment distance, the
/// per-confounder distances, and the squared components of F * d so that the
/// weighted distance for any W costs O(P).
class PairDistanceCache {
 public:
  PairDistanceCache(const Observations& obs, const CovarianceTransform& s, DistanceKind kind,
                    int quantile_count);

  std::size_t n_units() const noexcept { return n_; }
  std::size_t n_confounders() const noexcept { return p_; }
  DistanceKind kind() const noexcept { return kind_; }
  int quantile_count() const noexcept { return k_; }

  /// D(X_u, X_v) (probabilistic) or |x_u - x_v| (deterministic).
  double treat_dist(UnitId u, UnitId v) const { return treat_[index(u, v)]; }
  /// D(Z^p_u, Z^p_v) (probabilistic) or |z^p_u - z^p_v| (deterministic).
  double conf_dist(std::size_t p, UnitId u, UnitId v) const { return conf_[index(u, v) * p_ + p]; }
  /// Confounder distance vector for a pair.
  std::vector<double> conf_vector(UnitId u, UnitId v) const;

  /// Weighted distance of the confounder discrepancy for W.
  double weighted(UnitId u, UnitId v, const WeightMatrix& w) const;

 private:
  std::size_t index(UnitId u, UnitId v) const {
    if (u > v) std::swap(u, v);
    return u * n_ - u * (u + 1) / 2 + (v - u - 1);
  }

  std::size_t n_ = 0;
  std::size_t p_ = 0;
  DistanceKind kind_;
  int k_ = 0;
  std::vector<double> treat_;
  std::vector<double> conf_;
  std::vector<double> whitened_sq_;
};

/// Distance between units for matching.
///
/// Probabilistic: (D_Z + eps') / max(D_X, eps') where eps' = epsilon / sqrt(K),
/// i.e. epsilon expressed on the quantile-distance scale (point masses a, b
/// have D = |a - b| / sqrt(K)). On point-mass data this is exactly the
/// continuous weighted distance (d_W + epsilon) / |x_u - x_v| up to rounding.
///
/// Deterministic: (d_W + epsilon) / max(|x_u - x_v|, epsilon).
double unit_distance(UnitId u, UnitId v, const PairDistanceCache& cache, const WeightMatrix& w,
                     double epsilon);

}  // namespace probmatch
