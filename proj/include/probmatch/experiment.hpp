#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "probmatch/dataset.hpp"
#include "probmatch/error.hpp"
#include "probmatch/io.hpp"
#include "probmatch/methods.hpp"
#include "probmatch/synth.hpp"

namespace probmatch {

enum class Scenario { noisy_treatment, noisy_confounder, location, social_analog, custom };

Scenario parse_scenario(std::string_view name);
std::string_view to_string(Scenario s);

/// One experiment suite. The noise grid holds sigma2 for the Gaussian-class
/// scenarios and T_min for the location scenario; the social analog and
/// custom scenarios use it only as a row label.
struct ExperimentConfig {
  Scenario scenario = Scenario::noisy_treatment;
  std::vector<Method> methods{Method::genmatch, Method::probgenmatch, Method::optgenmatch};
  std::size_t replications = 20;
  std::size_t coefficient_sets = 5;
  std::vector<double> noise_grid;
  /// Scenario defaults apply when absent.
  std::optional<MatchConstraints> constraints;
  GaConfig ga{.population_size = 10, .generations = 5};
  LossSpec loss;
  int K = kDefaultQuantileCount;
  double alpha = 0.05;
  std::uint64_t seed = 1;

  std::size_t n_units = 200;
  int m_dims = 2;
  double sigma1 = 1.0;
  std::size_t n_train = 400;
  double noise_variance1 = 1.0;
  double noise_variance2 = 2.0;
  bool outcome_noise = true;
  /// Overrides the drawn treatment coefficient beta0 when set.
  std::optional<double> beta0;
  /// Location scenario models; the standard ones when absent.
  std::optional<synth::MobilityModel> mobility;
  std::optional<synth::ConfusionMatrix> confusion;
  /// Dataset for the custom scenario.
  std::string data_path;

  /// Scenario defaults for the grid when it is empty.
  void fill_defaults();
  /// Replication grid of the original study: 10 coefficient sets x 100.
  void use_full_grid();
  void validate() const;
};

/// Accepts a bare config object or a manifest written by run_experiment
/// (whose "config" member is used).
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// FNV-1a of the canonical JSON form.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Constraints used for a grid point when the config has none.
MatchConstraints scenario_constraints(const ExperimentConfig& cfg, double noise_level);

/// Data for one replication cell in the three views the methods need.
struct ScenarioInstance {
  /// Observed (stochastic) view with outcome and ground truth attached.
  StudyDataset dataset;
  /// Point view built from the noisy hard values.
  Observations noisy;
  /// Treatment values used for effect estimation by the noisy methods.
  std::vector<double> noisy_treatment;
  MatchConstraints constraints;
};

ScenarioInstance make_instance(const ExperimentConfig& cfg, std::size_t noise_index, std::size_t coefficient_set,
                               std::size_t replication);

struct CellResult {
  std::size_t noise_index = 0;
  std::size_t coefficient_set = 0;
  std::size_t replication = 0;
  Method method = Method::genmatch;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double treatment_difference = 0.0;
  double differing_fraction = 0.0;
  /// 1 when the effect test rejected, 0 when not, NaN when it could not run.
  double rejected = 0.0;
  std::size_t pairs = 0;
  std::vector<double> smd;
};

/// Runs one cell for every configured method.
std::vector<CellResult> run_cell(const ExperimentConfig& cfg, std::size_t noise_index, std::size_t coefficient_set,
                                 std::size_t replication);

struct ExperimentResult {
  std::vector<std::string> confounder_names;
  /// Ordered by (noise, coefficient set, replication, method).
  std::vector<CellResult> cells;
};

/// Cells run on a pool of `threads` workers; the result does not depend on
/// the thread count.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1);

struct SummaryRow {
  double noise_level;
  Method method;
  std::string metric;
  double mean;
  double ci_low;
  double ci_high;
  std::size_t n;
};

/// Per grid point, method and metric: mean with a normal 95% interval over
/// the cells where the metric is finite.
std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const ExperimentResult& result);

/// Writes manifest.json, cells, summary and one table per metric family.
void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result,
                              const std::string& out_dir, DataFormat format);

// ---------------------------------------------------------------------------
// Command entry points returning process exit codes.

struct CliOptions {
  std::optional<std::uint64_t> seed;
  bool full_grid = false;
  std::size_t threads = 1;
  DataFormat format = DataFormat::csv;
};

/// 0 ok, 2 schema, 3 no_pairs, 4 anything else.
int exit_code(ErrorCode code);

int cmd_validate(const std::string& dataset_path, std::ostream& out, std::ostream& err);
int cmd_match(const std::string& dataset_path, const std::string& config_path, const std::string& out_dir,
              const CliOptions& options, std::ostream& err);
int cmd_experiment(const std::string& config_path, const std::string& out_dir, const CliOptions& options,
                   std::ostream& err);

/// Match configuration: method, constraints, ga, loss, K, alpha, seed.
struct MatchConfig {
  Method method = Method::probgenmatch;
  MethodConfig method_config;
  double alpha = 0.05;
  bool eval_truth = false;
};
MatchConfig match_config_from_json(const nlohmann::json& j);

}  // namespace probmatch
