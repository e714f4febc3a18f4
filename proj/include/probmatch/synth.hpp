#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "probmatch/stochastic.hpp"

namespace probmatch::synth {

// ---------------------------------------------------------------------------
// Gaussian classes and calibrated classifier

struct GaussianClassConfig {
  int m_dims = 2;
  double sigma1 = 1.0;  // spread of the positive class (mean +1)
  double sigma2 = 1.0;  // spread of the negative class (mean -1)
  std::size_t n_train = 400;
  std::size_t n_study = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledFeatures {
  Eigen::MatrixXd features;  // n x M
  std::vector<int> labels;   // 0/1
};

/// Balanced sample: positives ~ N(+1, sigma1^2), negatives ~ N(-1, sigma2^2)
/// independently per dimension.
LabeledFeatures gen_gaussian_classes(const GaussianClassConfig& cfg, std::size_t n, std::uint64_t seed);

/// Feature vectors for given labels under the same class model.
Eigen::MatrixXd features_for_labels(std::span<const int> labels, const GaussianClassConfig& cfg,
                                    std::uint64_t seed);

/// s(x) = w.x + q*|x|^2 + b. With q fixed at 0 this is a plain linear
/// scorer; the squared-norm term lets it represent the class boundary of two
/// isotropic Gaussians with different spreads.
struct LinearScorer {
  Eigen::VectorXd weights;
  double quadratic = 0.0;
  double bias = 0.0;

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return x.dot(weights.transpose()) + quadratic * x.squaredNorm() + bias;
  }
};

enum class ScorerFeatures { linear, with_squared_norm };

/// Pr(L = 1 | score s) = 1 / (1 + exp(a*s + b)).
struct SigmoidCalibration {
  double a = -1.0;
  double b = 0.0;

  double probability(double s) const;
};

/// Maximum-likelihood sigmoid fit with Platt's smoothed targets.
SigmoidCalibration fit_sigmoid_calibration(std::span<const double> scores, std::span<const int> labels);

struct ProbabilisticClassifier {
  LinearScorer scorer;
  SigmoidCalibration calibration;

  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return calibration.probability(scorer.score(x));
  }
};

/// L2-regularized logistic scorer fit on one half of the data (seeded split),
/// sigmoid calibration fit on the scores of the other half. Fails when only
/// one class is present.
ProbabilisticClassifier fit_classifier_with_calibration(const Eigen::MatrixXd& features,
                                                        std::span<const int> labels, std::uint64_t seed,
                                                        ScorerFeatures kind = ScorerFeatures::with_squared_norm);

/// A binary variable observed through a classifier.
struct NoisyBinary {
  std::vector<int> truth;
  std::vector<int> noisy;          // hard label: probability >= 0.5
  std::vector<double> probability; // calibrated Pr(L = 1)
  std::vector<StochasticScalar> distribution() const;
};

/// Scores fresh features generated for the given true labels.
NoisyBinary study_from_classifier(std::span<const int> labels, const GaussianClassConfig& cfg,
                                  const ProbabilisticClassifier& clf, std::uint64_t seed);
/// Same with a fresh balanced sample of cfg.n_study labels.
NoisyBinary study_from_classifier(const GaussianClassConfig& cfg, const ProbabilisticClassifier& clf,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenario generators

struct TreatmentScenario {
  std::vector<double> z1;
  std::vector<double> z2;
};

/// Z1 = alpha1 * L + e1, Z2 = alpha2 * L + e2 with e_i ~ N(0, variance_i).
TreatmentScenario gen_scenario_treatment(std::span<const double> l, double alpha1, double alpha2,
                                         std::uint64_t seed, double variance1 = 1.0, double variance2 = 2.0);

struct ConfounderScenario {
  std::vector<double> x;
  std::vector<int> l;
  std::vector<double> z1;
};

/// X ~ U[0,1]; L ~ Bernoulli(1 / (1 + exp(-(alpha0 + alpha1 * X)))); Z1 = alpha1 * X + e1.
ConfounderScenario gen_scenario_confounder(std::size_t n, double alpha0, double alpha1, std::uint64_t seed,
                                           double noise_variance = 1.0);

/// Y = beta0 * L + sum_j beta_j * Z_j + n_u + e_n with n_u ~ U[0,4] and
/// e_n ~ N(0,1). `betas` holds beta0 followed by one coefficient per Z column.
std::vector<double> gen_outcome(std::span<const double> l, const std::vector<std::vector<double>>& z,
                                std::span<const double> betas, std::uint64_t seed, bool with_noise = true);

// ---------------------------------------------------------------------------
// Location study

inline constexpr std::size_t kLocationLabels = 7;
enum class Location : std::size_t { home, work, college, entertainment, food, shops, other };
std::string_view to_string(Location l);

using LabelVector = std::array<double, kLocationLabels>;

/// rows[predicted][true] = Pr(true label | predicted label).
struct ConfusionMatrix {
  std::array<LabelVector, kLocationLabels> rows{};

  /// Entertainment row: ent .41, home 0, and college/work/shops/food/other in
  /// the ratio 4:4:4:33:9 sharing the remaining .59. Other rows 0.8 on the
  /// diagonal, rest uniform.
  static ConfusionMatrix standard();
  static ConfusionMatrix identity();
  void validate() const;
};

/// Hourly label process: with probability dwell[current] the label persists,
/// otherwise the next label is drawn from `stationary`.
struct MobilityModel {
  LabelVector stationary{};
  LabelVector dwell{};

  static MobilityModel standard();
  void validate() const;
};

struct LocationStudy {
  std::vector<double> truth;  // entertainment hours / 24
  std::vector<double> noisy;  // predicted entertainment hours / 24
  std::vector<StochasticScalar> distribution;  // Poisson-binomial / 24
  std::vector<std::array<std::size_t, 24>> true_labels;
  std::vector<std::array<std::size_t, 24>> predicted_labels;
};

/// Pr(predicted = j | true = i) implied by the predicted->true rows and the
/// stationary label distribution.
std::array<LabelVector, kLocationLabels> corruption_kernel(const ConfusionMatrix& confusion,
                                                           const LabelVector& stationary);

LocationStudy gen_location_study(std::size_t days, const MobilityModel& mobility, const ConfusionMatrix& confusion,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Social-media analog: continuous treatment, binary noisy confounder

struct SocialAnalogConfig {
  std::size_t n_users = 400;
  double spammer_rate = 0.3;
  double spammer_accuracy = 0.76;
  double nonspammer_accuracy = 0.82;
  std::size_t n_calibration = 400;
};

struct SocialAnalog {
  std::vector<double> treatment;  // fraction of messages with URLs
  NoisyBinary spammer;
  std::vector<std::vector<double>> others;  // posts, account class, followers (standardized)
  std::vector<double> outcome;               // re-posts (log scale)
};

SocialAnalog gen_social_analog(const SocialAnalogConfig& cfg, std::uint64_t seed);

}  // namespace probmatch::synth
