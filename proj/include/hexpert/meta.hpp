#pragma once

// Across-task specialization for sine meta-regression. A selector reads a
// permutation-invariant histogram embedding of a task's training split and
// routes the whole task to one Gaussian-head regression expert. The selector
// is scored on the validation split, the chosen expert trains on the
// training split.

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/net.hpp"
#include "hexpert/rng.hpp"
#include "hexpert/supervised.hpp"
#include "hexpert/tasks.hpp"

namespace hexpert::meta {

struct TaskDataset {
  tasks::RegressionSplit train;
  tasks::RegressionSplit val;
  tasks::SineTask task;  // generating parameters
};

TaskDataset make_task(const tasks::SineTask& task, int K, tasks::XRange range, Rng& rng);
// a ~ U[0.1, 5], b ~ U[0, 2 pi]
TaskDataset sample_task(int K, tasks::XRange range, Rng& rng);

// Mean y per x-bin over `bins` uniform bins spanning `range`; empty bins are
// 0 and points outside the range fall into the end bins. Values inside a bin
// are summed in sorted order, so any permutation of the split gives a
// bit-identical result.
Eigen::VectorXd embed_regression(const tasks::RegressionSplit& split, int bins, tasks::XRange range);

struct MetaConfig {
  int num_experts = 8;
  int bins = 20;
  tasks::XRange range;
  std::vector<int> selector_hidden{16, 16};
  std::vector<int> expert_hidden{40};
  Activation activation = Activation::Tanh;
  ResourceParams rp{25.0, 1.25, 0.99, 0.99, 0.99};
  AdamConfig selector_adam;
  AdamConfig expert_adam;
  double huber_delta = 1.0;
  double baseline_decay = 0.99;
  int expert_steps = 1;    // optimizer steps of the chosen expert per assigned task
  double adapt_lr = 0.01;  // plain gradient descent during adaptation
};

struct MetaBank {
  MetaBank() = default;
  MetaBank(const MetaConfig& cfg, Rng& rng);

  MetaConfig config;
  NetD selector;
  std::vector<NetD> experts;
  Simplex prior_m;
  std::vector<supervised::GaussianPrior> priors;  // p(y|m)
  ResourceParams rp;

  AdamD selector_opt;
  std::vector<AdamD> expert_opt;
  double baseline = 0.0;
  bool baseline_init = false;

  int num_experts() const { return static_cast<int>(experts.size()); }
  Eigen::VectorXd embed(const tasks::RegressionSplit& split) const;
  Simplex selector_posterior(const tasks::RegressionSplit& train) const;
  int select(const tasks::RegressionSplit& train) const;  // argmax expert
};

// Mean over the split of -huber(mean - y) - KL(p(y|x,m) || p(y|m)) / beta2.
double expert_free_energy(const MetaBank& bank, int m, const tasks::RegressionSplit& split);

// Mean squared error of the expert's mean prediction.
double mse(const NetD& expert, const tasks::RegressionSplit& split);

struct MetaMetrics {
  double free_energy = 0.0;  // mean f over the episode's val splits
  double val_mse = 0.0;      // chosen expert, before adaptation
  double rate_xm = 0.0;      // mean KL(p(m|z) || p(m))
  Eigen::VectorXd usage;     // fraction of tasks routed to each expert
};

// One pass of the meta-training loop over a batch of tasks: embed, sample an
// expert, score it on the val split, step the selector on the score-function
// gradient, train the chosen expert on the train split, EMA-update priors.
MetaMetrics meta_train_episode(MetaBank& bank, const std::vector<TaskDataset>& batch, Rng& rng);

struct Adaptation {
  double pre_mse = 0.0;
  double post_mse = 0.0;
  int expert = 0;
};

// Copies the argmax expert, runs grad_steps descent steps on the Huber loss
// of the train split, and reports val MSE before and after. The bank is not
// modified.
Adaptation adapt_and_evaluate(const MetaBank& bank, const TaskDataset& task, int grad_steps);

struct MetaEvaluation {
  double pre_mse = 0.0;
  double post_mse = 0.0;
  double improved_fraction = 0.0;  // tasks with post <= pre
  double rate_xm = 0.0;            // I(X;M) of the selector over the evaluated tasks
  double confidence = 0.0;         // mean max_m p(m|z)
};

MetaEvaluation evaluate(const MetaBank& bank, int num_tasks, int K, int grad_steps, Rng& rng);

struct PartitionCell {
  double a = 0.0;
  double b = 0.0;
  int expert = 0;
  Eigen::VectorXd probs;
};

// Selector posterior over a regular (a, b) grid, one K-shot draw per cell.
std::vector<PartitionCell> partition_map(const MetaBank& bank, int a_points, int b_points, int K, Rng& rng);
double mean_confidence(const std::vector<PartitionCell>& cells);

// Rows "a,b,expert,p_0..p_{M-1}".
void write_partition_csv(std::ostream& os, const std::vector<PartitionCell>& cells);

}  // namespace hexpert::meta
