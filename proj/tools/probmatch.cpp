// probmatch command-line tool: validate, match, experiment.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "probmatch/error.hpp"
#include "probmatch/experiment.hpp"
#include "probmatch/io.hpp"

int main(int argc, char** argv) {
  using namespace probmatch;

  CLI::App app{"Genetic matching with probabilistic treatments and confounders"};
  app.require_subcommand(1);

  std::string dataset, config, out;
  std::uint64_t seed = 0;
  bool full_grid = false;
  std::size_t threads = 1;
  std::string format = "csv";

  auto* validate = app.add_subcommand("validate", "Check a dataset without matching");
  validate->add_option("dataset", dataset, "CSV or JSON dataset")->required();

  auto* match = app.add_subcommand("match", "Match one dataset and report balance and effect");
  match->add_option("dataset", dataset, "CSV or JSON dataset")->required();
  match->add_option("--config", config, "Match configuration (JSON)");
  match->add_option("--out", out, "Output directory")->required();
  auto* match_seed = match->add_option("--seed", seed, "Seed for the search and sampling");
  match->add_option("--format", format, "Pairs file format")->check(CLI::IsMember({"csv", "json"}));

  auto* experiment = app.add_subcommand("experiment", "Run a synthetic experiment suite");
  experiment->add_option("--config", config, "Experiment configuration or manifest (JSON)")->required();
  experiment->add_option("--out", out, "Output directory")->required();
  auto* exp_seed = experiment->add_option("--seed", seed, "Override the config seed");
  experiment->add_flag("--full-grid", full_grid, "10 coefficient sets x 100 replications");
  experiment->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  experiment->add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CliOptions opts;
  opts.full_grid = full_grid;
  opts.threads = threads;
  opts.format = parse_format(format);

  if (validate->parsed()) return cmd_validate(dataset, std::cout, std::cerr);
  if (match->parsed()) {
    if (match_seed->count() > 0) opts.seed = seed;
    return cmd_match(dataset, config, out, opts, std::cerr);
  }
  if (exp_seed->count() > 0) opts.seed = seed;
  return cmd_experiment(config, out, opts, std::cerr);
}
