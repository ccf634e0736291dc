#pragma once

// Free-energy actor-critic hierarchy: a selector actor-critic picks an expert
// per state, each expert actor-critic emits a Gaussian action. Critics
// regress discounted free energies, actors follow advantage-weighted
// policy gradients.

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/net.hpp"
#include "hexpert/rng.hpp"
#include "hexpert/supervised.hpp"
#include "hexpert/tasks.hpp"

namespace hexpert::rl {

struct Step {
  Eigen::VectorXd state;
  int expert = 0;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;       // episode ended here
  bool truncated = false;  // ended by the step budget, not by failure
  double log_p_action = 0.0;      // ln p(a|x,m)
  double log_prior_action = 0.0;  // ln p(a|m)
  double log_p_expert = 0.0;      // ln p(m|x)
  double log_prior_expert = 0.0;  // ln p(m)
};

struct Trajectory {
  std::vector<Step> steps;
  // Filled by annotate().
  Eigen::VectorXd R, F, Fbar, A, Abar;

  std::size_t size() const { return steps.size(); }
  double total_reward() const;
  // True when the last step ends the episode by failure, so nothing follows.
  bool terminal() const { return !steps.empty() && steps.back().done && !steps.back().truncated; }
};

// Backward recursion x_t + gamma * X_{t+1} over a per-step signal. The value
// after the last step is `bootstrap`, or 0 when that step is terminal.
Eigen::VectorXd discounted_sum(const Eigen::VectorXd& signal, double gamma, bool terminal, double bootstrap = 0.0);

Eigen::VectorXd discounted_returns(const Trajectory& traj, double gamma, double bootstrap = 0.0);

// Per-step free energies
//   f  = r - (ln p(a|x,m) - ln p(a|m)) / beta2
//   fb = f - (ln p(m|x) - ln p(m)) / beta1
struct FreeEnergies {
  Eigen::VectorXd f, fbar;
};
FreeEnergies step_free_energies(const Trajectory& traj, const ResourceParams& rp);

// Discounted F_t and Fbar_t with optional bootstraps after a non-terminal end.
std::pair<Eigen::VectorXd, Eigen::VectorXd> discounted_free_energy(const Trajectory& traj, const ResourceParams& rp,
                                                                   double bootstrap = 0.0, double bootstrap_bar = 0.0);

// One-step TD advantage f_t + gamma V(x_{t+1}) - V(x_t); the bootstrap is
// dropped on the terminal step.
Eigen::VectorXd advantage(const Eigen::VectorXd& f, const Eigen::VectorXd& v, const Eigen::VectorXd& v_next,
                          double gamma, bool terminal);

struct RLConfig {
  int state_dim = 4;
  int action_dim = 1;
  int num_experts = 2;
  std::vector<int> selector_hidden{32, 32};
  std::vector<int> expert_hidden{};  // linear experts
  std::vector<int> critic_hidden{32, 32};
  Activation activation = Activation::Tanh;
  ResourceParams rp{25.0, 2.5, 0.99, 0.99, 0.99};
  AdamConfig actor_adam{1e-4};
  AdamConfig critic_adam{1e-3};
  double huber_delta = 1.0;
  // Expert actors and all critics take this many optimizer steps per
  // iteration on equal slices of the batch; the selector actor takes one.
  int minibatches = 16;
  int critic_epochs = 4;  // passes of critic regression over each iteration's batch
  bool normalize_advantage = true;  // standardize the expert advantages A per iteration
};

struct RLBank {
  RLBank() = default;
  RLBank(const RLConfig& cfg, Rng& rng);

  RLConfig config;
  NetD selector_actor, selector_critic;
  std::vector<NetD> expert_actors, expert_critics;
  Simplex prior_m;
  std::vector<supervised::GaussianPrior> action_priors;
  ResourceParams rp;

  AdamD sel_actor_opt, sel_critic_opt;
  std::vector<AdamD> actor_opt, critic_opt;

  int num_experts() const { return static_cast<int>(expert_actors.size()); }
  Simplex selector_posterior(const Eigen::VectorXd& x) const;
  GaussianParams expert_policy(int m, const Eigen::VectorXd& x) const;
};

enum class Mode {
  Sample,  // m ~ p(m|x), a ~ p(a|x,m)
  Greedy,  // argmax expert, mean action
};

// Runs from a fresh reset until the episode ends or max_steps steps pass.
// `force_expert` >= 0 bypasses the selector.
Trajectory collect_rollout(tasks::CartPole& env, const RLBank& bank, Rng& rng, int max_steps,
                           Mode mode = Mode::Sample, int force_expert = -1);

// Fills R, F, Fbar, A, Abar using the bank's critics.
void annotate(Trajectory& traj, const RLBank& bank);

struct RLMetrics {
  double mean_reward = 0.0;   // mean total reward per rollout
  double mean_length = 0.0;
  double rate_xm = 0.0;       // mean KL(p(m|x) || p(m)) over visited states
  double expert_kl = 0.0;     // mean KL(p(a|x,m) || p(a|m)) over visited states
  double critic_loss = 0.0;   // mean Huber loss of the expert critics
  double selector_critic_loss = 0.0;
  Eigen::VectorXd prior_m;
};

// Collects batch_size rollouts, annotates them, then applies advantage
// weighted policy gradients to the actors, Huber regression of the critics
// on F / Fbar, and EMA updates of p(m) and the action priors.
RLMetrics rl_train_iteration(RLBank& bank, tasks::CartPole& env, int batch_size, int max_steps, Rng& rng);

struct EvalResult {
  double mean_length = 0.0;
  std::vector<int> lengths;
  Eigen::VectorXd expert_share;  // fraction of visited states whose argmax expert is m
};
EvalResult evaluate_policy(tasks::CartPole& env, const RLBank& bank, int episodes, int max_steps, Rng& rng,
                           Mode mode = Mode::Greedy);

// Rows "x,x_dot,theta,theta_dot,expert,p_0..p_{M-1}" over the states visited
// by greedy rollouts.
void write_partition_csv(std::ostream& os, tasks::CartPole& env, const RLBank& bank, int episodes, int max_steps,
                         Rng& rng);

}  // namespace hexpert::rl
