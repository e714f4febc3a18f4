#include "probmatch/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <type_traits>
#include <thread>

#include "probmatch/analysis.hpp"
#include "probmatch/error.hpp"
#include "probmatch/stats.hpp"
#include "probmatch/synth.hpp"

namespace probmatch {

namespace fs = std::filesystem;
using nlohmann::json;

Scenario parse_scenario(std::string_view name) {
  if (name == "noisy_treatment") return Scenario::noisy_treatment;
  if (name == "noisy_confounder") return Scenario::noisy_confounder;
  if (name == "location") return Scenario::location;
  if (name == "social_analog") return Scenario::social_analog;
  if (name == "custom") return Scenario::custom;
  fail(ErrorCode::schema, "unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::noisy_treatment:
      return "noisy_treatment";
    case Scenario::noisy_confounder:
      return "noisy_confounder";
    case Scenario::location:
      return "location";
    case Scenario::social_analog:
      return "social_analog";
    case Scenario::custom:
      return "custom";
  }
  return "custom";
}

void ExperimentConfig::fill_defaults() {
  if (!noise_grid.empty()) return;
  switch (scenario) {
    case Scenario::noisy_treatment:
    case Scenario::noisy_confounder:
      noise_grid = {1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
      break;
    case Scenario::location:
      noise_grid = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
      break;
    case Scenario::social_analog:
    case Scenario::custom:
      noise_grid = {0.0};
      break;
  }
}

void ExperimentConfig::use_full_grid() {
  coefficient_sets = 10;
  replications = 100;
}

void ExperimentConfig::validate() const {
  if (replications < 1) fail(ErrorCode::schema, "replications must be at least 1");
  if (coefficient_sets < 1) fail(ErrorCode::schema, "coefficient_sets must be at least 1");
  if (noise_grid.empty()) fail(ErrorCode::schema, "noise_grid must not be empty");
  if (methods.empty()) fail(ErrorCode::schema, "at least one method is required");
  if (K < 1) fail(ErrorCode::schema, "K must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::schema, "alpha must lie in [0, 1]");
  if (n_units < 4) fail(ErrorCode::schema, "n_units must be at least 4");
  if (m_dims < 1 || !(sigma1 > 0.0) || n_train < 4) fail(ErrorCode::schema, "invalid classifier settings");
  if (scenario == Scenario::custom && data_path.empty()) fail(ErrorCode::schema, "custom scenario needs data_path");
  if ((scenario == Scenario::noisy_treatment || scenario == Scenario::noisy_confounder))
    for (const double s : noise_grid)
      if (!(s > 0.0)) fail(ErrorCode::schema, "noise_grid entries must be positive for this scenario");
  if (scenario == Scenario::location)
    for (const double t : noise_grid)
      if (!(t >= 0.0)) fail(ErrorCode::schema, "T_min grid entries must be nonnegative");
  try {
    if (mobility) mobility->validate();
    if (confusion) confusion->validate();
    ga.validate();
  } catch (const Error& e) {
    fail(ErrorCode::schema, e.what());
  }
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
    if (!j.at(key).is_number_integer() || (!j.at(key).is_number_unsigned() && j.at(key).get<std::int64_t>() < 0))
      fail(ErrorCode::schema, std::string("config field '") + key + "' must be a non-negative integer");
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::schema, std::string("config field '") + key + "' has the wrong type");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::schema, "config must be a JSON object");
  const json& j = doc.contains("config") && doc.at("config").is_object() ? doc.at("config") : doc;
  static const std::vector<std::string> known = {
      "scenario", "method",  "methods",      "replications", "coefficient_sets", "noise_grid",
      "constraints", "ga",   "loss",         "K",            "alpha",            "seed",
      "n_units",  "m_dims",  "sigma1",       "n_train",      "noise_variance1",  "noise_variance2",
      "outcome_noise", "beta0", "data_path", "mobility", "confusion"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(ErrorCode::schema, "unknown config field '" + key + "'");

  ExperimentConfig cfg;
  std::string s;
  if (j.contains("scenario")) {
    read_field(j, "scenario", s);
    cfg.scenario = parse_scenario(s);
  }
  if (j.contains("method")) {
    read_field(j, "method", s);
    cfg.methods = {parse_method(s)};
  }
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read_field(j, "methods", names);
    cfg.methods.clear();
    for (const auto& n : names) cfg.methods.push_back(parse_method(n));
  }
  read_field(j, "replications", cfg.replications);
  read_field(j, "coefficient_sets", cfg.coefficient_sets);
  read_field(j, "noise_grid", cfg.noise_grid);
  if (j.contains("constraints") && !j.at("constraints").is_null()) {
    MatchConstraints c;
    from_json(j.at("constraints"), c);
    cfg.constraints = c;
  }
  if (j.contains("ga")) from_json(j.at("ga"), cfg.ga);
  if (j.contains("loss")) from_json(j.at("loss"), cfg.loss);
  read_field(j, "K", cfg.K);
  read_field(j, "alpha", cfg.alpha);
  read_field(j, "seed", cfg.seed);
  read_field(j, "n_units", cfg.n_units);
  read_field(j, "m_dims", cfg.m_dims);
  read_field(j, "sigma1", cfg.sigma1);
  read_field(j, "n_train", cfg.n_train);
  read_field(j, "noise_variance1", cfg.noise_variance1);
  read_field(j, "noise_variance2", cfg.noise_variance2);
  read_field(j, "outcome_noise", cfg.outcome_noise);
  if (j.contains("beta0") && !j.at("beta0").is_null()) {
    double b = 0.0;
    read_field(j, "beta0", b);
    cfg.beta0 = b;
  }
  read_field(j, "data_path", cfg.data_path);
  if (j.contains("mobility") && !j.at("mobility").is_null()) {
    const auto& m = j.at("mobility");
    if (!m.is_object()) fail(ErrorCode::schema, "mobility must be an object");
    synth::MobilityModel model = synth::MobilityModel::standard();
    read_field(m, "stationary", model.stationary);
    read_field(m, "dwell", model.dwell);
    cfg.mobility = model;
  }
  if (j.contains("confusion") && !j.at("confusion").is_null()) {
    synth::ConfusionMatrix c;
    read_field(j, "confusion", c.rows);
    cfg.confusion = c;
  }
  cfg.fill_defaults();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (const auto m : cfg.methods) methods.push_back(std::string(to_string(m)));
  json ga, loss;
  to_json(ga, cfg.ga);
  to_json(loss, cfg.loss);
  json j = {{"scenario", std::string(to_string(cfg.scenario))},
            {"methods", methods},
            {"replications", cfg.replications},
            {"coefficient_sets", cfg.coefficient_sets},
            {"noise_grid", cfg.noise_grid},
            {"ga", ga},
            {"loss", loss},
            {"K", cfg.K},
            {"alpha", cfg.alpha},
            {"seed", cfg.seed},
            {"n_units", cfg.n_units},
            {"m_dims", cfg.m_dims},
            {"sigma1", cfg.sigma1},
            {"n_train", cfg.n_train},
            {"noise_variance1", cfg.noise_variance1},
            {"noise_variance2", cfg.noise_variance2},
            {"outcome_noise", cfg.outcome_noise},
            {"data_path", cfg.data_path}};
  if (cfg.constraints) {
    json c;
    to_json(c, *cfg.constraints);
    j["constraints"] = c;
  } else {
    j["constraints"] = nullptr;
  }
  j["beta0"] = cfg.beta0 ? json(*cfg.beta0) : json(nullptr);
  j["mobility"] = cfg.mobility ? json{{"stationary", cfg.mobility->stationary}, {"dwell", cfg.mobility->dwell}}
                               : json(nullptr);
  j["confusion"] = cfg.confusion ? json(cfg.confusion->rows) : json(nullptr);
  return j;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MatchConstraints scenario_constraints(const ExperimentConfig& cfg, double noise_level) {
  MatchConstraints c;
  switch (cfg.scenario) {
    case Scenario::noisy_treatment:
      c.min_treatment_diff = 0.1;
      c.treatment_prob_threshold = 0.25;
      break;
    case Scenario::noisy_confounder:
      c.calipers = std::vector<double>{0.5, std::numeric_limits<double>::infinity()};
      c.caliper_prob_threshold = 0.25;
      break;
    case Scenario::location:
      c.min_treatment_diff = noise_level;
      c.treatment_prob_threshold = 0.25;
      break;
    case Scenario::social_analog:
      c.calipers = std::vector<double>{0.5, std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity()};
      c.caliper_prob_threshold = 0.15;
      break;
    case Scenario::custom:
      break;
  }
  if (cfg.constraints) {
    c = *cfg.constraints;
    if (cfg.scenario == Scenario::location) c.min_treatment_diff = noise_level;
  }
  return c;
}

namespace {

struct Coefficients {
  double alpha0, alpha1, alpha2;
  double beta0, beta1, beta2;
};

Coefficients draw_coefficients(const ExperimentConfig& cfg, std::size_t set) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {0xC0EFu, set}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Coefficients c{};
  c.alpha0 = unif(rng);
  c.alpha1 = unif(rng);
  c.alpha2 = unif(rng);
  // (0, 1]
  c.beta0 = 1.0 - unif(rng);
  c.beta1 = 1.0 - unif(rng);
  c.beta2 = 1.0 - unif(rng);
  if (cfg.beta0) c.beta0 = *cfg.beta0;
  return c;
}

std::vector<StochasticScalar> points(std::span<const double> v) {
  std::vector<StochasticScalar> out;
  out.reserve(v.size());
  for (const double x : v) out.push_back(StochasticScalar::point(x));
  return out;
}

std::vector<double> to_double(std::span<const int> v) { return {v.begin(), v.end()}; }

synth::NoisyBinary classify(const ExperimentConfig& cfg, double sigma2, std::span<const int> labels,
                            std::uint64_t cell_seed) {
  synth::GaussianClassConfig gc;
  gc.m_dims = cfg.m_dims;
  gc.sigma1 = cfg.sigma1;
  gc.sigma2 = sigma2;
  gc.n_train = cfg.n_train;
  gc.n_study = labels.size();
  gc.seed = cell_seed;
  const auto train = synth::gen_gaussian_classes(gc, cfg.n_train, derive_seed(cell_seed, {1}));
  const auto clf = synth::fit_classifier_with_calibration(train.features, train.labels, derive_seed(cell_seed, {2}));
  return synth::study_from_classifier(labels, gc, clf, derive_seed(cell_seed, {3}));
}

std::uint64_t cell_seed(const ExperimentConfig& cfg, std::size_t noise, std::size_t coef, std::size_t rep) {
  return derive_seed(cfg.seed, {noise, coef, rep});
}

}  // namespace

ScenarioInstance make_instance(const ExperimentConfig& cfg, std::size_t noise_index, std::size_t coefficient_set,
                               std::size_t replication) {
  const double level = cfg.noise_grid.at(noise_index);
  const auto coef = draw_coefficients(cfg, coefficient_set);
  const std::uint64_t seed = cell_seed(cfg, noise_index, coefficient_set, replication);
  const std::size_t n = cfg.n_units;

  ScenarioInstance inst;
  inst.constraints = scenario_constraints(cfg, level);

  switch (cfg.scenario) {
    case Scenario::noisy_treatment: {
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = i < (n + 1) / 2 ? 1 : 0;
      const auto nb = classify(cfg, level, labels, seed);
      const auto l = to_double(nb.truth);
      const auto lt = to_double(nb.noisy);
      const auto sc = synth::gen_scenario_treatment(l, coef.alpha1, coef.alpha2, derive_seed(seed, {4}),
                                                    cfg.noise_variance1, cfg.noise_variance2);
      const std::vector<double> betas{coef.beta0, coef.beta1, coef.beta2};
      auto y = synth::gen_outcome(l, {sc.z1, sc.z2}, betas, derive_seed(seed, {5}), cfg.outcome_noise);
      const std::vector<std::string> names{"z1", "z2"};
      Observations obs(nb.distribution(), {points(sc.z1), points(sc.z2)}, names);
      inst.dataset = StudyDataset(std::move(obs), std::move(y), GroundTruth{l, {sc.z1, sc.z2}});
      inst.noisy = Observations(points(lt), {points(sc.z1), points(sc.z2)}, names);
      inst.noisy_treatment = lt;
      break;
    }
    case Scenario::noisy_confounder: {
      const auto sc = synth::gen_scenario_confounder(n, coef.alpha0, coef.alpha1, derive_seed(seed, {4}),
                                                     cfg.noise_variance1);
      const auto nb = classify(cfg, level, sc.l, seed);
      const auto l = to_double(nb.truth);
      const auto lt = to_double(nb.noisy);
      const std::vector<double> betas{coef.beta0, 0.0};
      auto y = synth::gen_outcome(l, {sc.z1}, betas, derive_seed(seed, {5}), cfg.outcome_noise);
      const std::vector<std::string> names{"l", "z1"};
      Observations obs(points(sc.x), {nb.distribution(), points(sc.z1)}, names);
      inst.dataset = StudyDataset(std::move(obs), std::move(y), GroundTruth{sc.x, {l, sc.z1}});
      inst.noisy = Observations(points(sc.x), {points(lt), points(sc.z1)}, names);
      inst.noisy_treatment = sc.x;
      break;
    }
    case Scenario::location: {
      const auto study = synth::gen_location_study(n, cfg.mobility.value_or(synth::MobilityModel::standard()),
                                                   cfg.confusion.value_or(synth::ConfusionMatrix::standard()),
                                                   derive_seed(seed, {1}));
      const auto sc = synth::gen_scenario_treatment(study.truth, coef.alpha1, coef.alpha2, derive_seed(seed, {4}),
                                                    cfg.noise_variance1, cfg.noise_variance2);
      const std::vector<double> betas{coef.beta0, coef.beta1, coef.beta2};
      auto y = synth::gen_outcome(study.truth, {sc.z1, sc.z2}, betas, derive_seed(seed, {5}), cfg.outcome_noise);
      const std::vector<std::string> names{"z1", "z2"};
      Observations obs(study.distribution, {points(sc.z1), points(sc.z2)}, names);
      inst.dataset = StudyDataset(std::move(obs), std::move(y), GroundTruth{study.truth, {sc.z1, sc.z2}});
      inst.noisy = Observations(points(study.noisy), {points(sc.z1), points(sc.z2)}, names);
      inst.noisy_treatment = study.noisy;
      break;
    }
    case Scenario::social_analog: {
      synth::SocialAnalogConfig sc;
      sc.n_users = n;
      const auto s = synth::gen_social_analog(sc, seed);
      const auto l = to_double(s.spammer.truth);
      const auto lt = to_double(s.spammer.noisy);
      const std::vector<std::string> names{"spammer", "posts", "verified", "followers"};
      Observations obs(points(s.treatment),
                       {s.spammer.distribution(), points(s.others[0]), points(s.others[1]), points(s.others[2])},
                       names);
      GroundTruth truth{s.treatment, {l, s.others[0], s.others[1], s.others[2]}};
      inst.dataset = StudyDataset(std::move(obs), s.outcome, std::move(truth));
      inst.noisy = Observations(points(s.treatment),
                                {points(lt), points(s.others[0]), points(s.others[1]), points(s.others[2])}, names);
      inst.noisy_treatment = s.treatment;
      break;
    }
    case Scenario::custom: {
      inst.dataset = load_dataset_file(cfg.data_path);
      inst.noisy = point_estimates(inst.dataset.observed());
      inst.noisy_treatment = inst.noisy.treatment_means();
      break;
    }
  }
  return inst;
}

namespace {

CellResult evaluate_method(const ExperimentConfig& cfg, const ScenarioInstance& inst, Method method,
                           std::uint64_t seed) {
  CellResult r;
  r.method = method;
  r.seed = seed;
  MethodConfig mc;
  mc.constraints = inst.constraints;
  mc.loss = cfg.loss;
  mc.ga = cfg.ga;
  mc.ga.seed = derive_seed(seed, {0x6A});
  mc.quantile_count = cfg.K;
  mc.mc.seed = derive_seed(seed, {0x3C});

  const auto& ds = inst.dataset;
  EvolveResult found;
  switch (method) {
    case Method::genmatch:
      found = genmatch(inst.noisy, mc);
      break;
    case Method::probgenmatch:
      found = probgenmatch(ds.observed(), mc);
      break;
    case Method::optgenmatch:
      found = optgenmatch(ds, mc);
      break;
  }
  if (found.match.pairs.empty()) fail(ErrorCode::no_pairs, "no admissible pairs for any weight vector");

  const auto& pairs = found.match.pairs;
  r.pairs = pairs.size();
  const bool has_truth = ds.truth().has_value();
  const std::vector<double> true_x = has_truth ? ds.truth()->treatment : ds.observed().treatment_means();
  double diff = 0.0;
  std::size_t differing = 0;
  for (const auto& p : pairs) {
    const double d = std::abs(true_x[p.treated] - true_x[p.control]);
    diff += d;
    differing += d > 0.0;
  }
  r.treatment_difference = diff / static_cast<double>(pairs.size());
  r.differing_fraction = static_cast<double>(differing) / static_cast<double>(pairs.size());

  const auto report = balance_report(found.match, ds, has_truth);
  for (const auto& c : report.confounders) r.smd.push_back(c.smd);

  r.rejected = std::numeric_limits<double>::quiet_NaN();
  if (ds.outcome()) {
    const auto& x = method == Method::optgenmatch ? true_x : inst.noisy_treatment;
    try {
      r.rejected = causal_test(pairs, *ds.outcome(), x, cfg.alpha).rejected ? 1.0 : 0.0;
    } catch (const Error&) {
      // too few usable pairs for the test; the metric stays undefined
    }
  }
  r.ok = true;
  return r;
}

}  // namespace

std::vector<CellResult> run_cell(const ExperimentConfig& cfg, std::size_t noise_index, std::size_t coefficient_set,
                                 std::size_t replication) {
  const std::uint64_t seed = cell_seed(cfg, noise_index, coefficient_set, replication);
  std::vector<CellResult> out;
  std::optional<ScenarioInstance> inst;
  std::string gen_error;
  try {
    inst = make_instance(cfg, noise_index, coefficient_set, replication);
  } catch (const std::exception& e) {
    gen_error = e.what();
  }
  for (const auto m : cfg.methods) {
    CellResult r;
    if (inst) {
      try {
        r = evaluate_method(cfg, *inst, m, seed);
      } catch (const Error& e) {
        r.error = std::string(to_string(e.code())) + ": " + e.what();
      } catch (const std::exception& e) {
        r.error = std::string("internal: ") + e.what();
      }
    } else {
      r.error = "generation: " + gen_error;
    }
    r.method = m;
    r.seed = seed;
    r.noise_index = noise_index;
    r.coefficient_set = coefficient_set;
    r.replication = replication;
    out.push_back(std::move(r));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, std::size_t threads) {
  ExperimentConfig cfg = cfg_in;
  cfg.fill_defaults();
  cfg.validate();

  struct Key {
    std::size_t noise, coef, rep;
  };
  std::vector<Key> keys;
  for (std::size_t a = 0; a < cfg.noise_grid.size(); ++a)
    for (std::size_t b = 0; b < cfg.coefficient_sets; ++b)
      for (std::size_t c = 0; c < cfg.replications; ++c) keys.push_back({a, b, c});

  std::vector<std::vector<CellResult>> slots(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < keys.size(); i = next++) slots[i] = run_cell(cfg, keys[i].noise, keys[i].coef, keys[i].rep);
  };
  threads = std::max<std::size_t>(1, std::min(threads, keys.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult result;
  for (auto& s : slots)
    for (auto& r : s) result.cells.push_back(std::move(r));
  if (cfg.scenario == Scenario::custom) {
    for (const auto& r : result.cells)
      if (r.ok) {
        result.confounder_names = load_dataset_file(cfg.data_path).observed().confounder_names();
        break;
      }
  } else {
    result.confounder_names = make_instance(cfg, 0, 0, 0).dataset.observed().confounder_names();
  }
  return result;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::vector<std::string> metrics{"treatment_difference", "differing_fraction", "rejection_rate", "pairs"};
  for (const auto& n : result.confounder_names) metrics.push_back("smd_" + n);

  auto value_of = [&](const CellResult& r, std::size_t m) -> double {
    switch (m) {
      case 0:
        return r.treatment_difference;
      case 1:
        return r.differing_fraction;
      case 2:
        return r.rejected;
      case 3:
        return static_cast<double>(r.pairs);
      default:
        return m - 4 < r.smd.size() ? r.smd[m - 4] : std::numeric_limits<double>::quiet_NaN();
    }
  };

  std::vector<SummaryRow> rows;
  for (std::size_t a = 0; a < cfg.noise_grid.size(); ++a) {
    for (const auto method : cfg.methods) {
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        std::vector<double> v;
        for (const auto& r : result.cells) {
          if (!r.ok || r.noise_index != a || r.method != method) continue;
          const double x = value_of(r, m);
          if (std::isfinite(x)) v.push_back(x);
        }
        SummaryRow row{cfg.noise_grid[a], method, metrics[m], std::numeric_limits<double>::quiet_NaN(),
                       std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), v.size()};
        if (!v.empty()) {
          row.mean = stats::mean(v);
          const double half = v.size() > 1 ? 1.96 * std::sqrt(stats::sample_variance(v) / static_cast<double>(v.size())) : 0.0;
          row.ci_low = row.mean - half;
          row.ci_high = row.mean + half;
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::io, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorCode::io, "write failed for " + path.string());
}

bool metric_in(const std::string& metric, std::string_view family) {
  if (family == "smd") return metric.rfind("smd_", 0) == 0;
  return metric == family;
}

}  // namespace

void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, const std::string& out_dir,
                              DataFormat format) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory " + out_dir);
  const fs::path dir(out_dir);
  const std::string hash = hex64(config_hash(cfg));
  const auto rows = summarize(cfg, result);

  const std::vector<std::pair<std::string, std::string>> tables = {
      {"summary", ""},
      {"treatment_difference", "treatment_difference"},
      {"differing_fraction", "differing_fraction"},
      {"rejection_rate", "rejection_rate"},
      {"smd", "smd"}};

  for (const auto& [name, family] : tables) {
    if (format == DataFormat::csv) {
      std::ostringstream os;
      os << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
      os << "noise_level,method,metric,mean,ci_low,ci_high,n\n";
      for (const auto& r : rows) {
        if (!family.empty() && !metric_in(r.metric, family)) continue;
        os << num(r.noise_level) << ',' << to_string(r.method) << ',' << r.metric << ',' << num(r.mean) << ','
           << num(r.ci_low) << ',' << num(r.ci_high) << ',' << r.n << '\n';
      }
      write_file(dir / (name + ".csv"), os.str());
    } else {
      json arr = json::array();
      for (const auto& r : rows) {
        if (!family.empty() && !metric_in(r.metric, family)) continue;
        arr.push_back({{"noise_level", r.noise_level}, {"method", std::string(to_string(r.method))},
                       {"metric", r.metric}, {"mean", num_json(r.mean)}, {"ci_low", num_json(r.ci_low)},
                       {"ci_high", num_json(r.ci_high)}, {"n", r.n}});
      }
      json doc = {{"config_hash", hash}, {"seed", cfg.seed}, {"rows", arr}};
      write_file(dir / (name + ".json"), doc.dump(2) + "\n");
    }
  }

  // Per-cell records.
  if (format == DataFormat::csv) {
    std::ostringstream os;
    os << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
    os << "noise_level,coefficient_set,replication,method,cell_seed,ok,pairs,treatment_difference,differing_fraction,"
          "rejected";
    for (const auto& n : result.confounder_names) os << ",smd_" << n;
    os << ",error\n";
    for (const auto& r : result.cells) {
      os << num(cfg.noise_grid[r.noise_index]) << ',' << r.coefficient_set << ',' << r.replication << ','
         << to_string(r.method) << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',' << r.pairs << ','
         << num(r.treatment_difference) << ',' << num(r.differing_fraction) << ',' << num(r.rejected);
      for (std::size_t i = 0; i < result.confounder_names.size(); ++i)
        os << ',' << (i < r.smd.size() ? num(r.smd[i]) : "nan");
      std::string err = r.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      os << ',' << err << '\n';
    }
    write_file(dir / "cells.csv", os.str());
  } else {
    json arr = json::array();
    for (const auto& r : result.cells) {
      json smd = json::array();
      for (const double s : r.smd) smd.push_back(num_json(s));
      arr.push_back({{"noise_level", cfg.noise_grid[r.noise_index]}, {"coefficient_set", r.coefficient_set},
                     {"replication", r.replication}, {"method", std::string(to_string(r.method))},
                     {"cell_seed", r.seed}, {"ok", r.ok}, {"pairs", r.pairs},
                     {"treatment_difference", num_json(r.treatment_difference)},
                     {"differing_fraction", num_json(r.differing_fraction)}, {"rejected", num_json(r.rejected)},
                     {"smd", smd}, {"error", r.error}});
    }
    json doc = {{"config_hash", hash}, {"seed", cfg.seed}, {"confounders", result.confounder_names}, {"cells", arr}};
    write_file(dir / "cells.json", doc.dump(2) + "\n");
  }

  std::size_t failed = 0;
  json seeds = json::array();
  for (const auto& r : result.cells) {
    failed += !r.ok;
    if (r.method == cfg.methods.front())
      seeds.push_back({{"noise_index", r.noise_index}, {"coefficient_set", r.coefficient_set},
                       {"replication", r.replication}, {"cell_seed", r.seed}});
  }
  json manifest = {{"config", to_json(cfg)},     {"config_hash", hash},
                   {"seed", cfg.seed},           {"format", format == DataFormat::csv ? "csv" : "json"},
                   {"cells", result.cells.size()}, {"failed_cells", failed},
                   {"cell_seeds", seeds}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema:
      return 2;
    case ErrorCode::no_pairs:
      return 3;
    default:
      return 4;
  }
}

namespace {

int report_error(std::ostream& err, ErrorCode code, const std::string& message) {
  json j = {{"error", std::string(to_string(code))}, {"message", message}};
  err << j.dump() << std::endl;
  return exit_code(code);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return report_error(err, e.code(), e.what());
  } catch (const json::exception& e) {
    return report_error(err, ErrorCode::schema, e.what());
  } catch (const std::exception& e) {
    return report_error(err, ErrorCode::internal, e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::io, "cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::schema, path + ": " + e.what());
  }
}

}  // namespace

MatchConfig match_config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::schema, "match config must be a JSON object");
  MatchConfig mc;
  std::string s;
  if (j.contains("method")) {
    read_field(j, "method", s);
    mc.method = parse_method(s);
  }
  if (j.contains("constraints") && !j.at("constraints").is_null()) from_json(j.at("constraints"), mc.method_config.constraints);
  if (j.contains("ga")) from_json(j.at("ga"), mc.method_config.ga);
  if (j.contains("loss")) from_json(j.at("loss"), mc.method_config.loss);
  read_field(j, "K", mc.method_config.quantile_count);
  read_field(j, "alpha", mc.alpha);
  read_field(j, "eval_truth", mc.eval_truth);
  if (j.contains("seed")) {
    std::uint64_t seed = 0;
    read_field(j, "seed", seed);
    mc.method_config.ga.seed = seed;
    mc.method_config.mc.seed = seed;
  }
  if (mc.method_config.quantile_count < 1) fail(ErrorCode::schema, "K must be positive");
  if (!(mc.alpha >= 0.0 && mc.alpha <= 1.0)) fail(ErrorCode::schema, "alpha must lie in [0, 1]");
  try {
    mc.method_config.ga.validate();
  } catch (const Error& e) {
    fail(ErrorCode::schema, e.what());
  }
  return mc;
}

int cmd_validate(const std::string& dataset_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    const auto ds = load_dataset_file(dataset_path);
    const auto& obs = ds.observed();
    json j = {{"status", "ok"},
              {"n_units", obs.n_units()},
              {"n_confounders", obs.n_confounders()},
              {"confounders", obs.confounder_names()},
              {"regime", detect_regime(obs) == MatchRegime::binary_bipartite ? "binary_bipartite"
                                                                             : "continuous_nonbipartite"},
              {"point_mass", obs.all_point_mass()},
              {"has_outcome", ds.outcome().has_value()},
              {"has_truth", ds.truth().has_value()}};
    out << j.dump() << std::endl;
    return 0;
  });
}

int cmd_match(const std::string& dataset_path, const std::string& config_path, const std::string& out_dir,
              const CliOptions& options, std::ostream& err) {
  return guarded(err, [&]() {
    MatchConfig cfg = config_path.empty() ? MatchConfig{} : match_config_from_json(read_json_file(config_path));
    if (options.seed) {
      cfg.method_config.ga.seed = *options.seed;
      cfg.method_config.mc.seed = *options.seed;
    }
    const auto ds = load_dataset_file(dataset_path);
    try {
      cfg.method_config.constraints.validate(ds.n_confounders());
    } catch (const Error& e) {
      fail(ErrorCode::schema, e.what());
    }
    const auto found = run_method(cfg.method, ds, cfg.method_config);
    if (found.match.pairs.empty()) fail(ErrorCode::no_pairs, "no admissible pairs");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::io, "cannot create output directory " + out_dir);
    const fs::path dir(out_dir);

    if (options.format == DataFormat::csv) {
      std::ostringstream os;
      save_pairs(found.match.pairs, os);
      write_file(dir / "pairs.csv", os.str());
    } else {
      json arr = json::array();
      for (const auto& p : found.match.pairs) arr.push_back({{"treated", p.treated}, {"control", p.control}});
      write_file(dir / "pairs.json", json{{"pairs", arr}}.dump(2) + "\n");
    }

    const bool truth = cfg.eval_truth && ds.truth().has_value();
    json balance = to_json(balance_report(found.match, ds, truth));
    balance["method"] = std::string(to_string(cfg.method));
    balance["loss"] = num_json(found.loss);
    json w = json::array();
    for (const double x : found.weights.diag()) w.push_back(x);
    balance["weights"] = w;
    write_file(dir / "balance.json", balance.dump(2) + "\n");

    if (ds.outcome()) {
      const Observations view = cfg.method == Method::optgenmatch ? ds.truth_observations() : point_estimates(ds.observed());
      const auto x = view.treatment_means();
      json result;
      try {
        result = to_json(causal_test(found.match.pairs, *ds.outcome(), x, cfg.alpha));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::invalid_argument) throw;
        // too few usable pairs for the test; keep the point estimate if there is one
        result = {{"estimate", nullptr}, {"wilcoxon_statistic", nullptr}, {"p_value", nullptr},
                  {"n_pairs", found.match.pairs.size()}, {"rejected", false}, {"note", e.what()}};
        try {
          const auto est = ate(found.match.pairs, *ds.outcome(), x);
          result["estimate"] = num_json(est.estimate);
          result["n_pairs"] = est.ratios.size();
          result["excluded_pairs"] = est.excluded_pairs;
        } catch (const Error&) {
        }
      }
      write_file(dir / "ate.json", result.dump(2) + "\n");
    }
    return 0;
  });
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir, const CliOptions& options,
                   std::ostream& err) {
  return guarded(err, [&]() {
    ExperimentConfig cfg = experiment_config_from_json(read_json_file(config_path));
    if (options.seed) cfg.seed = *options.seed;
    if (options.full_grid) cfg.use_full_grid();
    cfg.validate();
    const auto result = run_experiment(cfg, options.threads);
    for (const auto& r : result.cells)
      if (!r.ok)
        err << "cell noise=" << cfg.noise_grid[r.noise_index] << " set=" << r.coefficient_set
            << " rep=" << r.replication << " method=" << to_string(r.method) << " failed: " << r.error << "\n";
    write_experiment_outputs(cfg, result, out_dir, options.format);
    return 0;
  });
}

}  // namespace probmatch
