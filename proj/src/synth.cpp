#include "probmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "probmatch/error.hpp"

namespace probmatch::synth {

namespace {

using Rng = std::mt19937_64;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::vector<int> balanced_labels(std::size_t n) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < (n + 1) / 2 ? 1 : 0;
  return labels;
}

void require_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size()))
    fail(ErrorCode::invalid_argument, "classifier training needs both classes");
}

/// Ridge-penalized logistic regression by Newton iterations.
LinearScorer fit_logistic(const Eigen::MatrixXd& x, std::span<const int> labels, double ridge, bool squared) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m0 = x.cols();
  const Eigen::Index m = squared ? m0 + 1 : m0;
  Eigen::MatrixXd a(n, m + 1);
  a.leftCols(m0) = x;
  if (squared) a.col(m0) = x.rowwise().squaredNorm();
  a.col(m).setOnes();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(m + 1, ridge);
  penalty[m] = 1e-8;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = a * theta;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    const Eigen::VectorXd grad = a.transpose() * (p - y) + penalty.cwiseProduct(theta);
    Eigen::MatrixXd hess = a.transpose() * w.asDiagonal() * a;
    hess.diagonal() += penalty;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    theta -= step;
    if (step.norm() < 1e-10 * (1.0 + theta.norm())) break;
  }
  LinearScorer s;
  s.weights = theta.head(m0);
  s.quadratic = squared ? theta[m0] : 0.0;
  s.bias = theta[m];
  return s;
}

}  // namespace

void GaussianClassConfig::validate() const {
  if (m_dims < 1) fail(ErrorCode::invalid_argument, "m_dims must be positive");
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) fail(ErrorCode::invalid_argument, "class spreads must be positive");
  if (n_train < 2 || n_study < 2) fail(ErrorCode::invalid_argument, "sample sizes must be at least 2");
}

Eigen::MatrixXd features_for_labels(std::span<const int> labels, const GaussianClassConfig& cfg,
                                    std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(labels.size()), cfg.m_dims);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pos = labels[i] == 1;
    const double mu = pos ? 1.0 : -1.0;
    const double sd = pos ? cfg.sigma1 : cfg.sigma2;
    for (int d = 0; d < cfg.m_dims; ++d) f(static_cast<Eigen::Index>(i), d) = mu + sd * normal(rng);
  }
  return f;
}

LabeledFeatures gen_gaussian_classes(const GaussianClassConfig& cfg, std::size_t n, std::uint64_t seed) {
  LabeledFeatures out;
  out.labels = balanced_labels(n);
  out.features = features_for_labels(out.labels, cfg, seed);
  return out;
}

double SigmoidCalibration::probability(double s) const {
  const double f = a * s + b;
  // evaluated on the side that cannot overflow
  if (f >= 0.0) {
    const double e = std::exp(-f);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(f));
}

SigmoidCalibration fit_sigmoid_calibration(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty())
    fail(ErrorCode::invalid_argument, "calibration needs one label per score");
  require_both_classes(labels);

  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = labels[i] == 1 ? hi : lo;

  // Newton's method with backtracking on the cross-entropy in (a, b).
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = a * scores[i] + b;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double a = 0.0;
  double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = objective(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = a * scores[i] + b;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = t[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-9 && std::abs(g2) < 1e-9) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return SigmoidCalibration{a, b};
}

ProbabilisticClassifier fit_classifier_with_calibration(const Eigen::MatrixXd& features,
                                                        std::span<const int> labels, std::uint64_t seed,
                                                        ScorerFeatures kind) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    fail(ErrorCode::invalid_argument, "one label per feature row is required");
  require_both_classes(labels);

  // Stratified split so both halves keep both classes. The permutation does
  // not look at the labels, so renaming the classes gives the same split.
  std::size_t n_pos = 0;
  for (const int l : labels) n_pos += l == 1;
  if (n_pos < 2 || labels.size() - n_pos < 2) fail(ErrorCode::invalid_argument, "each class needs at least two examples");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> train, held;
  std::array<std::size_t, 2> seen{};
  for (const std::size_t i : order) {
    const auto c = static_cast<std::size_t>(labels[i] == 1);
    (seen[c]++ % 2 == 0 ? train : held).push_back(i);
  }
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());

  Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), features.cols());
  std::vector<int> yt(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    xt.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(train[i]));
    yt[i] = labels[train[i]];
  }

  ProbabilisticClassifier clf;
  clf.scorer = fit_logistic(xt, yt, 1.0, kind == ScorerFeatures::with_squared_norm);

  std::vector<double> scores(held.size());
  std::vector<int> yh(held.size());
  for (std::size_t i = 0; i < held.size(); ++i) {
    scores[i] = clf.scorer.score(features.row(static_cast<Eigen::Index>(held[i])));
    yh[i] = labels[held[i]];
  }
  clf.calibration = fit_sigmoid_calibration(scores, yh);
  return clf;
}

std::vector<StochasticScalar> NoisyBinary::distribution() const {
  std::vector<StochasticScalar> out;
  out.reserve(probability.size());
  for (const double p : probability) out.push_back(StochasticScalar::bernoulli(p));
  return out;
}

NoisyBinary study_from_classifier(std::span<const int> labels, const GaussianClassConfig& cfg,
                                  const ProbabilisticClassifier& clf, std::uint64_t seed) {
  const Eigen::MatrixXd f = features_for_labels(labels, cfg, seed);
  NoisyBinary out;
  out.truth.assign(labels.begin(), labels.end());
  out.noisy.resize(labels.size());
  out.probability.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clf.probability(f.row(static_cast<Eigen::Index>(i)));
    out.probability[i] = p;
    out.noisy[i] = p >= 0.5 ? 1 : 0;
  }
  return out;
}

NoisyBinary study_from_classifier(const GaussianClassConfig& cfg, const ProbabilisticClassifier& clf,
                                  std::uint64_t seed) {
  const auto labels = balanced_labels(cfg.n_study);
  return study_from_classifier(labels, cfg, clf, seed);
}

TreatmentScenario gen_scenario_treatment(std::span<const double> l, double alpha1, double alpha2,
                                         std::uint64_t seed, double variance1, double variance2) {
  if (variance1 < 0.0 || variance2 < 0.0) fail(ErrorCode::invalid_argument, "noise variance must be nonnegative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd1 = std::sqrt(variance1);
  const double sd2 = std::sqrt(variance2);
  TreatmentScenario out;
  out.z1.resize(l.size());
  out.z2.resize(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    out.z1[i] = alpha1 * l[i] + sd1 * normal(rng);
    out.z2[i] = alpha2 * l[i] + sd2 * normal(rng);
  }
  return out;
}

ConfounderScenario gen_scenario_confounder(std::size_t n, double alpha0, double alpha1, std::uint64_t seed,
                                           double noise_variance) {
  if (noise_variance < 0.0) fail(ErrorCode::invalid_argument, "noise variance must be nonnegative");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(noise_variance);
  ConfounderScenario out;
  out.x.resize(n);
  out.l.resize(n);
  out.z1.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.x[i] = unif(rng);
    const double ps = sigmoid(alpha0 + alpha1 * out.x[i]);
    out.l[i] = unif(rng) < ps ? 1 : 0;
    out.z1[i] = alpha1 * out.x[i] + sd * normal(rng);
  }
  return out;
}

std::vector<double> gen_outcome(std::span<const double> l, const std::vector<std::vector<double>>& z,
                                std::span<const double> betas, std::uint64_t seed, bool with_noise) {
  if (betas.size() != z.size() + 1) fail(ErrorCode::invalid_argument, "expected one beta per Z column plus beta0");
  for (const auto& col : z)
    if (col.size() != l.size()) fail(ErrorCode::invalid_argument, "Z column length differs from L");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 4.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    double v = betas[0] * l[i];
    for (std::size_t j = 0; j < z.size(); ++j) v += betas[j + 1] * z[j][i];
    // draws are taken regardless of the toggle so streams stay aligned
    const double nu = unif(rng);
    const double en = normal(rng);
    if (with_noise) v += nu + en;
    y[i] = v;
  }
  return y;
}

std::string_view to_string(Location l) {
  static constexpr std::string_view names[] = {"home", "work", "college", "entertainment", "food", "shops", "other"};
  return names[static_cast<std::size_t>(l)];
}

namespace {

constexpr std::size_t kEnt = static_cast<std::size_t>(Location::entertainment);

void check_probability_vector(const LabelVector& v, const std::string& what) {
  double total = 0.0;
  for (const double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_argument, what + " has a negative or non-finite entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, what + " does not sum to 1");
}

std::size_t draw_label(const LabelVector& probs, double r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kLocationLabels; ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  for (std::size_t i = kLocationLabels; i-- > 0;)
    if (probs[i] > 0.0) return i;
  return 0;
}

}  // namespace

ConfusionMatrix ConfusionMatrix::standard() {
  ConfusionMatrix c;
  for (std::size_t i = 0; i < kLocationLabels; ++i)
    for (std::size_t j = 0; j < kLocationLabels; ++j) c.rows[i][j] = i == j ? 0.8 : 0.2 / 6.0;
  auto& ent = c.rows[kEnt];
  ent = {};
  // The listed wrong labels cover 0.54; they are scaled up to the stated 0.59.
  const double scale = 0.59 / 0.54;
  ent[static_cast<std::size_t>(Location::entertainment)] = 0.41;
  ent[static_cast<std::size_t>(Location::college)] = 0.04 * scale;
  ent[static_cast<std::size_t>(Location::work)] = 0.04 * scale;
  ent[static_cast<std::size_t>(Location::shops)] = 0.04 * scale;
  ent[static_cast<std::size_t>(Location::food)] = 0.33 * scale;
  ent[static_cast<std::size_t>(Location::other)] = 0.09 * scale;
  ent[static_cast<std::size_t>(Location::home)] = 0.0;
  return c;
}

ConfusionMatrix ConfusionMatrix::identity() {
  ConfusionMatrix c;
  for (std::size_t i = 0; i < kLocationLabels; ++i) c.rows[i][i] = 1.0;
  return c;
}

void ConfusionMatrix::validate() const {
  for (std::size_t i = 0; i < kLocationLabels; ++i)
    check_probability_vector(rows[i], "confusion row '" + std::string(to_string(static_cast<Location>(i))) + "'");
}

MobilityModel MobilityModel::standard() {
  MobilityModel m;
  m.stationary = {0.25, 0.10, 0.03, 0.50, 0.04, 0.04, 0.04};
  m.dwell.fill(0.98);
  return m;
}

void MobilityModel::validate() const {
  check_probability_vector(stationary, "stationary distribution");
  for (const double d : dwell)
    if (!(d >= 0.0 && d < 1.0)) fail(ErrorCode::invalid_argument, "dwell probabilities must lie in [0, 1)");
}

std::array<LabelVector, kLocationLabels> corruption_kernel(const ConfusionMatrix& confusion,
                                                           const LabelVector& stationary) {
  // Predicted marginal q solves sum_j q_j * rows[j][i] = pi_i.
  Eigen::Matrix<double, kLocationLabels, kLocationLabels> ct;
  Eigen::Matrix<double, kLocationLabels, 1> pi;
  for (std::size_t i = 0; i < kLocationLabels; ++i) {
    pi[static_cast<Eigen::Index>(i)] = stationary[i];
    for (std::size_t j = 0; j < kLocationLabels; ++j)
      ct(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = confusion.rows[j][i];
  }
  Eigen::Matrix<double, kLocationLabels, 1> q = ct.fullPivLu().solve(pi);
  const bool usable = (ct * q - pi).norm() < 1e-9 && (q.array() >= -1e-12).all();
  if (!usable) q = pi;

  std::array<LabelVector, kLocationLabels> kernel{};
  for (std::size_t i = 0; i < kLocationLabels; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < kLocationLabels; ++j) {
      kernel[i][j] = confusion.rows[j][i] * std::max(0.0, q[static_cast<Eigen::Index>(j)]);
      total += kernel[i][j];
    }
    if (total > 0.0) {
      for (auto& v : kernel[i]) v /= total;
    } else {
      kernel[i] = {};
      kernel[i][i] = 1.0;
    }
  }
  return kernel;
}

LocationStudy gen_location_study(std::size_t days, const MobilityModel& mobility, const ConfusionMatrix& confusion,
                                 std::uint64_t seed) {
  mobility.validate();
  confusion.validate();
  const auto kernel = corruption_kernel(confusion, mobility.stationary);

  // Jump distribution making `stationary` the long-run distribution of the chain.
  LabelVector jump{};
  double jt = 0.0;
  for (std::size_t i = 0; i < kLocationLabels; ++i) {
    jump[i] = mobility.stationary[i] * (1.0 - mobility.dwell[i]);
    jt += jump[i];
  }
  for (auto& v : jump) v /= jt;

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LocationStudy out;
  out.truth.resize(days);
  out.noisy.resize(days);
  out.distribution.reserve(days);
  out.true_labels.resize(days);
  out.predicted_labels.resize(days);
  std::vector<double> hourly(24);
  for (std::size_t d = 0; d < days; ++d) {
    std::size_t cur = draw_label(mobility.stationary, unif(rng));
    int l = 0, lt = 0;
    for (std::size_t h = 0; h < 24; ++h) {
      if (h > 0 && !(unif(rng) < mobility.dwell[cur])) cur = draw_label(jump, unif(rng));
      const std::size_t pred = draw_label(kernel[cur], unif(rng));
      out.true_labels[d][h] = cur;
      out.predicted_labels[d][h] = pred;
      l += cur == kEnt;
      lt += pred == kEnt;
      hourly[h] = confusion.rows[pred][kEnt];
    }
    out.truth[d] = l / 24.0;
    out.noisy[d] = lt / 24.0;
    const auto pmf = poisson_binomial_pmf(hourly);
    std::vector<std::pair<double, double>> atoms;
    for (std::size_t k = 0; k < pmf.size(); ++k) atoms.emplace_back(static_cast<double>(k) / 24.0, pmf[k]);
    out.distribution.push_back(StochasticScalar::from_atoms(std::move(atoms)));
  }
  return out;
}

SocialAnalog gen_social_analog(const SocialAnalogConfig& cfg, std::uint64_t seed) {
  if (cfg.n_users < 2 || cfg.n_calibration < 4) fail(ErrorCode::invalid_argument, "social analog sample too small");
  if (!(cfg.spammer_rate > 0.0 && cfg.spammer_rate < 1.0))
    fail(ErrorCode::invalid_argument, "spammer_rate must lie in (0, 1)");
  auto inv_phi = [](double acc) {
    if (!(acc > 0.5 && acc < 1.0)) fail(ErrorCode::invalid_argument, "class accuracies must lie in (0.5, 1)");
    // score offset m with Pr(N(0,1) < m) = acc, by bisection on erfc
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < acc ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double m_spam = inv_phi(cfg.spammer_accuracy);
  const double m_ham = inv_phi(cfg.nonspammer_accuracy);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto score_for = [&](int spam, Rng& rng) { return (spam ? m_spam : -m_ham) + normal(rng); };

  // Calibration sample, scored by the same noisy classifier.
  Rng cal_rng(derive_seed(seed, {1}));
  std::vector<double> cal_scores(cfg.n_calibration);
  std::vector<int> cal_labels(cfg.n_calibration);
  for (std::size_t i = 0; i < cfg.n_calibration; ++i) {
    cal_labels[i] = unif(cal_rng) < cfg.spammer_rate ? 1 : 0;
    cal_scores[i] = score_for(cal_labels[i], cal_rng);
  }
  if (std::count(cal_labels.begin(), cal_labels.end(), 1) == 0) cal_labels[0] = 1;
  if (std::count(cal_labels.begin(), cal_labels.end(), 0) == 0) cal_labels[0] = 0;
  const SigmoidCalibration calib = fit_sigmoid_calibration(cal_scores, cal_labels);

  Rng rng(derive_seed(seed, {2}));
  const std::size_t n = cfg.n_users;
  SocialAnalog out;
  out.treatment.resize(n);
  out.outcome.resize(n);
  out.others.assign(3, std::vector<double>(n));
  out.spammer.truth.resize(n);
  out.spammer.noisy.resize(n);
  out.spammer.probability.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int spam = unif(rng) < cfg.spammer_rate ? 1 : 0;
    const double s = score_for(spam, rng);
    const double posts = normal(rng) + 0.8 * spam;
    const double verified = unif(rng) < (spam ? 0.05 : 0.25) ? 1.0 : 0.0;
    const double followers = normal(rng) - 0.8 * spam + 0.5 * verified;
    const double urls = sigmoid(-1.0 + 2.0 * spam + 0.3 * posts + 0.5 * normal(rng));
    const double reposts = 0.5 * urls - 1.5 * spam + 0.3 * followers + 0.2 * verified + 0.5 * normal(rng);

    out.spammer.truth[i] = spam;
    out.spammer.probability[i] = calib.probability(s);
    out.spammer.noisy[i] = s > 0.0 ? 1 : 0;
    out.treatment[i] = urls;
    out.others[0][i] = posts;
    out.others[1][i] = verified;
    out.others[2][i] = followers;
    out.outcome[i] = reposts;
  }
  return out;
}

}  // namespace probmatch::synth
