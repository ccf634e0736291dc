#pragma once

// Self-contained data generators and environments: synthetic classification
// sets, Gaussian-mixture samples, sine-regression tasks and cart-pole.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hexpert/rng.hpp"

namespace hexpert::tasks {

struct LabeledDataset {
  Eigen::MatrixXd inputs;  // N x D
  Eigen::VectorXi labels;  // N class ids in [0, num_classes)
  int num_classes = 0;
  std::string name;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const;
};

// moons: two interleaved half circles; circles: concentric circles with
// radius ratio 0.5; blobs: three isotropic Gaussian clusters with standard
// deviation `noise`. Classes alternate with the sample index. Inputs are
// standardized to zero mean and unit variance per column.
LabeledDataset make_classification(const std::string& name, Eigen::Index n, double noise, std::uint64_t seed);

// Zero-mean, unit-variance columns (in place). Constant columns are only
// centered.
void standardize(Eigen::MatrixXd& inputs);

// Fold `k` of a `folds`-fold split over a seeded permutation: the fold is the
// held-out part, the rest is training data.
struct FoldSplit {
  LabeledDataset train;
  LabeledDataset test;
};
FoldSplit kfold_split(const LabeledDataset& data, int folds, int k, std::uint64_t seed);

// Row i belongs to component i mod means.size(), so mixing weights are
// exactly equal. Each component has covariance cov_scale * I.
Eigen::MatrixXd sample_mixture(const std::vector<Eigen::VectorXd>& means, double cov_scale, Eigen::Index n,
                               std::uint64_t seed);

// y = a sin(x + b)
struct SineTask {
  double a = 1.0;
  double b = 0.0;

  double operator()(double x) const;
};

struct RegressionSplit {
  Eigen::VectorXd x;
  Eigen::VectorXd y;

  Eigen::Index size() const { return x.size(); }
};

struct XRange {
  double lo = -5.0;
  double hi = 5.0;
};

SineTask sample_sine_task(Rng& rng);

// Draws disjoint train and val splits of K points each, x uniform on range.
std::pair<RegressionSplit, RegressionSplit> sine_dataset(const SineTask& task, int K, XRange range, Rng& rng);

// ------------------------------------------------------------- cart-pole

struct CartPoleState {
  double x = 0.0;          // m
  double x_dot = 0.0;      // m/s
  double theta = 0.0;      // rad, 0 is upright
  double theta_dot = 0.0;  // rad/s

  Eigen::Vector4d vec() const { return {x, x_dot, theta, theta_dot}; }
};

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double tau = 0.02;
  double theta_limit = 12.0 * 3.14159265358979323846 / 180.0;
  double x_limit = 2.4;
  int max_steps = 500;
};

struct CartPoleStep {
  CartPoleState next;
  double reward = 1.0;
  bool done = false;       // episode over (terminated or truncated)
  bool truncated = false;  // done only because the step budget ran out
};

CartPoleState cartpole_reset(Rng& rng);

// One Euler step of the classic cart-pole dynamics. `signal` is clipped to
// [-1, 1] and scaled to force_mag newtons. `steps_taken` counts steps before
// this one; the episode truncates once it reaches max_steps.
CartPoleStep cartpole_step(const CartPoleState& s, double signal, int steps_taken = 0,
                           const CartPoleParams& params = {});

// Stateful wrapper holding the current state and step count.
class CartPole {
 public:
  explicit CartPole(CartPoleParams params = {}) : params_(params) {}

  const CartPoleState& reset(Rng& rng) {
    state_ = cartpole_reset(rng);
    steps_ = 0;
    return state_;
  }
  CartPoleStep step(double signal) {
    CartPoleStep r = cartpole_step(state_, signal, steps_, params_);
    state_ = r.next;
    ++steps_;
    return r;
  }
  const CartPoleState& state() const { return state_; }
  int steps() const { return steps_; }
  const CartPoleParams& params() const { return params_; }

  static constexpr int kStateDim = 4;
  static constexpr int kActionDim = 1;

 private:
  CartPoleParams params_;
  CartPoleState state_;
  int steps_ = 0;
};

// ------------------------------------------------------------------ CSV

void write_dataset_csv(std::ostream& os, const LabeledDataset& data);

struct TraceRow {
  int t = 0;
  CartPoleState state;
  double action = 0.0;
  double reward = 0.0;
  bool done = false;
};
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace hexpert::tasks
