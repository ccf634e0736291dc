#pragma once

// Online selector-plus-experts learner for classification, regression and
// tabular-utility problems. The selector p(m|x) and the experts p(y|x,m) are
// trained on single-sample Monte-Carlo estimates of their free energies,
// with EMA approximations of the marginal priors p(m) and p(y|m).

#include <Eigen/Dense>

#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/net.hpp"
#include "hexpert/oracle.hpp"
#include "hexpert/rng.hpp"
#include "hexpert/tasks.hpp"

namespace hexpert::supervised {

enum class Task {
  Classification,  // softmax experts, utility = -cross-entropy
  Regression,      // Gaussian-head experts, utility = -squared error of the mean
  Tabular,         // softmax experts, utility = E_p[U(x, .)] for a given row U(x, .)
};

struct BankConfig {
  Task task = Task::Classification;
  int input_dim = 2;
  int num_outputs = 2;  // classes or actions; 1 for regression
  int num_experts = 1;
  std::vector<int> selector_hidden{10, 10};
  std::vector<int> expert_hidden{};  // empty: linear experts
  Activation activation = Activation::Tanh;
  ResourceParams rp;
  AdamConfig selector_adam;
  AdamConfig expert_adam;
  double baseline_decay = 0.99;
};

// EMA of a Gaussian head's mean and variance; the prior of a regression
// expert.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  Eigen::VectorXd log_std() const { return (0.5 * var.array().log()).matrix(); }
};

struct ExpertBank {
  ExpertBank() = default;
  ExpertBank(const BankConfig& cfg, Rng& rng);

  BankConfig config;
  NetD selector;
  std::vector<NetD> experts;
  Simplex prior_m;
  std::vector<Simplex> prior_y;         // classification / tabular
  std::vector<GaussianPrior> prior_reg;  // regression
  ResourceParams rp;

  AdamD selector_opt;
  std::vector<AdamD> expert_opt;
  double baseline = 0.0;
  bool baseline_init = false;

  int num_experts() const { return static_cast<int>(experts.size()); }
  Simplex selector_posterior(const Eigen::VectorXd& x) const;
  Simplex expert_posterior(int m, const Eigen::VectorXd& x) const;   // softmax experts
  GaussianParams expert_gaussian(int m, const Eigen::VectorXd& x) const;  // regression experts
  // Mixture prediction sum_m p(m|x) p(y|x,m) for softmax experts.
  Eigen::VectorXd mixture(const Eigen::VectorXd& x) const;
};

// What the utility needs to know about one example.
struct Target {
  int label = -1;          // classification
  double value = 0.0;      // regression
  Eigen::VectorXd utility;  // tabular row U(x, .)
};

// Rows of `inputs` paired with the matching entry of the task's target
// field.
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::VectorXi labels;     // classification
  Eigen::VectorXd targets;    // regression
  Eigen::MatrixXd utilities;  // tabular, one row per example

  Eigen::Index size() const { return inputs.rows(); }
  Target target(Eigen::Index i) const;
};

// f(m,x) = utility - KL(expert posterior || expert prior) / beta2.
double expert_free_energy(const ExpertBank& bank, int m, const Eigen::VectorXd& x, const Target& target);

struct StepMetrics {
  double utility = 0.0;       // mean utility of the sampled experts
  double free_energy = 0.0;   // mean f of the sampled experts
  double rate_xm = 0.0;       // mean KL(p(m|x) || p(m))
  double expert_kl = 0.0;     // mean KL of the sampled expert to its prior
};

// One pass over the batch: per example sample m ~ p(m|x), score the sampled
// expert, accumulate a score-function gradient for the selector (with a
// running-mean baseline) and the analytic free-energy gradient for the
// expert, and update the EMA priors. One optimizer step per net at the end.
StepMetrics train_step(ExpertBank& bank, const Batch& batch, Rng& rng);

struct EvalMetrics {
  double accuracy = 0.0;  // classification
  double mse = 0.0;       // regression
  double utility = 0.0;   // mean expected utility of the mixture policy
  double rate_xm = 0.0;
  double rate_xy_given_m = 0.0;
  Eigen::VectorXd usage;  // mean p(m|x)
};

EvalMetrics evaluate(const ExpertBank& bank, const Batch& data);

Batch to_batch(const tasks::LabeledDataset& data);
Batch sample_batch(const Batch& data, Eigen::Index size, Rng& rng);

// --- tabular problems on one-hot states, for comparison with the oracle.

ExpertBank make_tabular_bank(const oracle::TabularProblem& prob, const ResourceParams& rp, AdamConfig adam,
                             Rng& rng);
Batch sample_tabular_batch(const oracle::TabularProblem& prob, Eigen::Index size, Rng& rng);
// Reads p(m|x) and p(y|x,m) off the nets; priors are the exact marginals.
oracle::HierSolution extract_tables(const ExpertBank& bank, const oracle::TabularProblem& prob,
                                    const ResourceParams& rp);

}  // namespace hexpert::supervised
