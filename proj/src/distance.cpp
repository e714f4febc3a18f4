#include "probmatch/distance.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "probmatch/error.hpp"

namespace probmatch {

WeightMatrix::WeightMatrix(std::vector<double> diag) : diag_(std::move(diag)) {
  for (const double w : diag_)
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorCode::invalid_argument, "weights must be positive and finite");
}

CovarianceTransform::CovarianceTransform(Eigen::MatrixXd factor) : factor_(std::move(factor)) {
  if (factor_.rows() != factor_.cols()) fail(ErrorCode::invalid_argument, "covariance factor must be square");
}

void CovarianceTransform::apply(std::span<const double> v, std::span<double> out) const {
  const auto p = static_cast<Eigen::Index>(v.size());
  if (p != factor_.rows() || out.size() != v.size())
    fail(ErrorCode::invalid_argument, "dimension mismatch in covariance transform");
  for (Eigen::Index i = 0; i < p; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) acc += factor_(i, j) * v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

Eigen::MatrixXd confounder_covariance(const Observations& obs) {
  const auto n = static_cast<Eigen::Index>(obs.n_units());
  const auto p = static_cast<Eigen::Index>(obs.n_confounders());
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto m = obs.confounder_means(static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = m[static_cast<std::size_t>(i)];
  }
  const Eigen::RowVectorXd mu = z.colwise().mean();
  const Eigen::MatrixXd centered = z.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

CovarianceTransform covariance_sqrt(const Eigen::MatrixXd& covariance) {
  const auto p = covariance.rows();
  if (p == 0 || covariance.cols() != p) fail(ErrorCode::invalid_argument, "covariance must be square and nonempty");
  const double trace = covariance.trace();
  const double ridge = 1e-8 * trace / static_cast<double>(p);
  if (!(ridge > 0.0) || !std::isfinite(trace)) fail(ErrorCode::singular, "singular covariance (zero total variance)");
  Eigen::MatrixXd reg = covariance;
  reg.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) fail(ErrorCode::singular, "singular covariance (factorization failed)");
  const Eigen::MatrixXd lower = llt.matrixL();
  for (Eigen::Index i = 0; i < p; ++i) {
    // squared pivot = variance left in direction i after removing earlier ones
    if (lower(i, i) * lower(i, i) <= 2.0 * ridge)
      fail(ErrorCode::singular, "singular covariance (confounder " + std::to_string(i) +
                                    " has no variance beyond the ridge)");
  }
  Eigen::MatrixXd inv = lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  return CovarianceTransform(std::move(inv));
}

CovarianceTransform covariance_sqrt(const Observations& obs) {
  if (obs.n_units() <= obs.n_confounders())
    fail(ErrorCode::singular, "need more units than confounders to estimate a covariance");
  return covariance_sqrt(confounder_covariance(obs));
}

double rv_distance(const QuantileVector& a, const QuantileVector& b) {
  if (a.k_count() != b.k_count() || a.k_count() == 0)
    fail(ErrorCode::invalid_argument, "quantile vectors differ in length");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    sum += d * d;
  }
  return std::sqrt(sum) / static_cast<double>(a.k_count());
}

namespace {

double weighted_form(std::span<const double> v, const WeightMatrix& w, const CovarianceTransform& s) {
  if (v.size() != w.size() || v.size() != s.size())
    fail(ErrorCode::invalid_argument, "dimension mismatch in weighted distance");
  std::vector<double> t(v.size());
  s.apply(v, t);
  double q = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) q += w[i] * t[i] * t[i];
  return std::sqrt(std::max(q, 0.0));
}

}  // namespace

double mahalanobis_weighted(std::span<const double> delta, const WeightMatrix& w, const CovarianceTransform& s) {
  return weighted_form(delta, w, s);
}

double prob_mahalanobis(std::span<const double> dvec, const WeightMatrix& w, const CovarianceTransform& s) {
  return weighted_form(dvec, w, s);
}

PairDistanceCache::PairDistanceCache(const Observations& obs, const CovarianceTransform& s, DistanceKind kind,
                                     int quantile_count)
    : n_(obs.n_units()), p_(obs.n_confounders()), kind_(kind), k_(quantile_count) {
  if (s.size() != p_) fail(ErrorCode::invalid_argument, "covariance transform does not match confounder count");
  const std::size_t pairs = n_ * (n_ - 1) / 2;
  treat_.resize(pairs);
  conf_.resize(pairs * p_);
  whitened_sq_.resize(pairs * p_);

  std::vector<double> x_point;
  std::vector<std::vector<double>> z_point;
  std::vector<QuantileVector> x_q;
  std::vector<std::vector<QuantileVector>> z_q;
  if (kind == DistanceKind::deterministic) {
    if (!obs.all_point_mass())
      fail(ErrorCode::invalid_argument, "deterministic distances need point-mass observations");
    x_point = obs.treatment_means();
    for (std::size_t p = 0; p < p_; ++p) z_point.push_back(obs.confounder_means(p));
  } else {
    if (quantile_count < 1) fail(ErrorCode::invalid_argument, "quantile count must be >= 1");
    for (const auto& x : obs.treatment()) x_q.push_back(quantiles(x, quantile_count));
    for (std::size_t p = 0; p < p_; ++p) {
      auto& row = z_q.emplace_back();
      for (const auto& z : obs.confounder_row(p)) row.push_back(quantiles(z, quantile_count));
    }
  }

  std::vector<double> d(p_), t(p_);
  for (UnitId u = 0; u + 1 < n_; ++u) {
    for (UnitId v = u + 1; v < n_; ++v) {
      const std::size_t idx = index(u, v);
      if (kind == DistanceKind::deterministic) {
        treat_[idx] = std::abs(x_point[u] - x_point[v]);
        for (std::size_t p = 0; p < p_; ++p) {
          d[p] = z_point[p][u] - z_point[p][v];
          conf_[idx * p_ + p] = std::abs(d[p]);
        }
      } else {
        treat_[idx] = rv_distance(x_q[u], x_q[v]);
        for (std::size_t p = 0; p < p_; ++p) {
          d[p] = rv_distance(z_q[p][u], z_q[p][v]);
          conf_[idx * p_ + p] = d[p];
        }
      }
      s.apply(d, t);
      for (std::size_t p = 0; p < p_; ++p) whitened_sq_[idx * p_ + p] = t[p] * t[p];
    }
  }
}

std::vector<double> PairDistanceCache::conf_vector(UnitId u, UnitId v) const {
  const std::size_t idx = index(u, v);
  return {conf_.begin() + static_cast<std::ptrdiff_t>(idx * p_),
          conf_.begin() + static_cast<std::ptrdiff_t>((idx + 1) * p_)};
}

double PairDistanceCache::weighted(UnitId u, UnitId v, const WeightMatrix& w) const {
  if (u == v) return 0.0;
  const double* sq = whitened_sq_.data() + index(u, v) * p_;
  double q = 0.0;
  for (std::size_t p = 0; p < p_; ++p) q += w[p] * sq[p];
  return std::sqrt(q);
}

double unit_distance(UnitId u, UnitId v, const PairDistanceCache& cache, const WeightMatrix& w, double epsilon) {
  if (u == v) fail(ErrorCode::invalid_argument, "unit distance needs two distinct units");
  const double eps = cache.kind() == DistanceKind::probabilistic
                         ? epsilon / std::sqrt(static_cast<double>(cache.quantile_count()))
                         : epsilon;
  return (cache.weighted(u, v, w) + eps) / std::max(cache.treat_dist(u, v), eps);
}

}  // namespace probmatch
