#pragma once

// Experiment drivers behind the CLI. Each driver takes a validated Config,
// derives every random stream from the master seed, and returns the numbers
// the acceptance checks need; run() additionally writes the artifacts.
//
// Seed streams: Rng(seed).derive(<purpose>, <index>), with purposes
// "data", "problem", "oracle", "bank", "train", "eval" and "partition". A
// stream depends only on (seed, purpose, index), never on what ran before.

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hexpert/config.hpp"
#include "hexpert/density.hpp"
#include "hexpert/meta.hpp"
#include "hexpert/oracle.hpp"
#include "hexpert/rl.hpp"
#include "hexpert/supervised.hpp"
#include "hexpert/tasks.hpp"

namespace hexpert::runner {

using config::Config;

// A run that started but could not finish (non-convergence, non-finite
// gradients, I/O). Maps to exit status 2.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ResourceParams resource_params(const Config& cfg);
supervised::BankConfig classifier_config(const Config& cfg, int input_dim, int num_classes);
density::DensityConfig density_config(const Config& cfg);
rl::RLConfig rl_config(const Config& cfg);
meta::MetaConfig meta_config(const Config& cfg);
std::vector<Eigen::VectorXd> mixture_means(const Config& cfg);

// ---------------------------------------------------------------- oracle
oracle::TabularProblem oracle_problem(const Config& cfg);
oracle::SolveResult run_oracle(const Config& cfg);

// ------------------------------------------------------- classification
struct TraceSink {
  // (step, metrics) every train.log_every steps; may be empty.
  std::function<void(int, const supervised::StepMetrics&)> on_step;
};

struct FoldOutcome {
  supervised::EvalMetrics test;
  supervised::EvalMetrics train;
  supervised::ExpertBank bank;
};

tasks::LabeledDataset classification_data(const Config& cfg);
FoldOutcome train_fold(const Config& cfg, const tasks::LabeledDataset& data, int fold, const TraceSink& sink = {});

// Tabular online learner against the exact oracle on a problem drawn from
// the "problem" stream with the given index.
struct TabularOutcome {
  oracle::TabularProblem problem;
  oracle::SolveResult oracle;
  oracle::HierSolution learned;
  double relative_gap = 0.0;  // |learned - oracle| / |oracle|
};
oracle::TabularProblem tabular_problem(const Config& cfg, int problem_index);
TabularOutcome train_tabular(const Config& cfg, int problem_index, const TraceSink& sink = {});
// Same, on a given problem; oracle restarts and the learner still draw from
// cfg's seed, so one problem can be learned under several seeds.
TabularOutcome train_tabular(const Config& cfg, const oracle::TabularProblem& problem, int problem_index,
                             const TraceSink& sink = {});

// -------------------------------------------------------------- density
struct DensityOutcome {
  Eigen::MatrixXd data;
  density::DensityBank bank;
};
DensityOutcome train_density(const Config& cfg,
                             const std::function<void(int, const density::DensityStepMetrics&)>& on_step = {});
// Distance from each expert's omega to the nearest true mean.
Eigen::VectorXd nearest_mean_distance(const density::DensityBank& bank, const std::vector<Eigen::VectorXd>& means);

// ------------------------------------------------------------------- rl
rl::RLBank train_rl(const Config& cfg, const std::function<void(int, const rl::RLMetrics&)>& on_iter = {});
rl::EvalResult evaluate_rl(const Config& cfg, const rl::RLBank& bank);

// ----------------------------------------------------------------- meta
meta::MetaBank train_meta(const Config& cfg, const std::function<void(int, const meta::MetaMetrics&)>& on_episode = {});
meta::MetaEvaluation evaluate_meta(const Config& cfg, const meta::MetaBank& bank, int K);
std::vector<meta::PartitionCell> meta_partition(const Config& cfg, const meta::MetaBank& bank, int K);

// ------------------------------------------------------------ artifacts
// <root>/<name>/seed-<seed>
std::filesystem::path run_directory(const Config& cfg, const std::filesystem::path& root);

struct RunSummary {
  std::filesystem::path dir;
  std::map<std::string, double> metrics;  // headline numbers, also in the manifest
};

// Validates, runs, and writes CSVs, checkpoint.json and manifest.json.
// Throws ConfigError for invalid configs and RuntimeFailure otherwise.
RunSummary run(const Config& cfg, const std::filesystem::path& root);

// Runs every (sweep.values x sweep.seeds) cell and writes
// <root>/<name>/sweep.csv with one row per cell.
std::vector<RunSummary> sweep(const Config& cfg, const std::filesystem::path& root);

}  // namespace hexpert::runner
