#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hexpert/rl.hpp"

using namespace hexpert;
using namespace hexpert::rl;

namespace {

Trajectory chain(std::initializer_list<double> rewards, bool terminal) {
  Trajectory tr;
  for (double r : rewards) {
    Step s;
    s.state = Eigen::Vector4d::Zero();
    s.next_state = Eigen::Vector4d::Zero();
    s.action = Eigen::VectorXd::Zero(1);
    s.reward = r;
    tr.steps.push_back(s);
  }
  tr.steps.back().done = true;
  tr.steps.back().truncated = !terminal;
  return tr;
}

ResourceParams params(double b1, double b2, double gamma) {
  ResourceParams rp;
  rp.beta1 = b1;
  rp.beta2 = b2;
  rp.gamma = gamma;
  return rp;
}

RLConfig small_config(int M) {
  RLConfig c;
  c.num_experts = M;
  c.selector_hidden = {8};
  c.critic_hidden = {8};
  return c;
}

}  // namespace

TEST(DiscountedReturns, Examples) {
  const Trajectory tr = chain({1, 1, 1}, true);
  const Eigen::VectorXd r = discounted_returns(tr, 0.5);
  EXPECT_DOUBLE_EQ(r(0), 1.75);
  EXPECT_DOUBLE_EQ(r(1), 1.5);
  EXPECT_DOUBLE_EQ(r(2), 1.0);
  const Trajectory mixed = chain({2, -1, 3}, true);
  const Eigen::VectorXd myopic = discounted_returns(mixed, 0.0);
  EXPECT_EQ(myopic, Eigen::Vector3d(2, -1, 3));
  EXPECT_EQ(discounted_returns(chain({0, 0, 0, 0}, true), 0.9).norm(), 0.0);
  // Truncated episodes bootstrap from the supplied value.
  EXPECT_DOUBLE_EQ(discounted_returns(chain({1}, false), 0.5, 4.0)(0), 3.0);
  EXPECT_DOUBLE_EQ(discounted_returns(chain({1}, true), 0.5, 4.0)(0), 1.0);
}

TEST(DiscountedFreeEnergy, Examples) {
  Trajectory tr = chain({1, 0.5, 2}, true);
  for (auto& s : tr.steps) {
    s.log_p_action = -0.7;
    s.log_prior_action = -0.7;
    s.log_p_expert = -0.2;
    s.log_prior_expert = -0.2;
  }
  const auto [F, Fbar] = discounted_free_energy(tr, params(25, 2, 0.9));
  const Eigen::VectorXd R = discounted_returns(tr, 0.9);
  EXPECT_EQ(F, R);
  EXPECT_EQ(Fbar, R);

  tr.steps[1].log_p_action = 0.3;
  const auto [Fi, Fbari] = discounted_free_energy(tr, params(25, 1e12, 0.9));
  EXPECT_LT((Fi - R).cwiseAbs().maxCoeff(), 1e-9);

  Trajectory one = chain({1}, true);
  one.steps[0].log_p_action = 0.5;
  one.steps[0].log_prior_action = 0.0;
  EXPECT_DOUBLE_EQ(discounted_free_energy(one, params(25, 2, 0.99)).first(0), 0.75);
  one.steps[0].log_p_expert = std::log(0.8);
  one.steps[0].log_prior_expert = std::log(0.5);
  EXPECT_NEAR(discounted_free_energy(one, params(4, 2, 0.99)).second(0), 0.75 - std::log(1.6) / 4.0, 1e-15);
}

TEST(Advantage, Examples) {
  const Eigen::Vector3d f(1, 1, 1), c = Eigen::Vector3d::Constant(7.0);
  EXPECT_EQ(advantage(f, c, c, 1.0, false), f);

  // Exact values for a two-step chain with f = (1, 1), gamma 0.5.
  const Eigen::Vector2d f2(1, 1), v(1.5, 1.0), v_next(1.0, 0.0);
  EXPECT_EQ(advantage(f2, v, v_next, 0.5, true).norm(), 0.0);

  const Eigen::Vector2d junk_next(1.0, 123.0);
  const Eigen::VectorXd a = advantage(f2, v, junk_next, 0.5, true);
  EXPECT_DOUBLE_EQ(a(1), f2(1) - v(1));
  EXPECT_THROW(advantage(f2, Eigen::Vector3d::Zero(), v_next, 0.5, true), DimensionMismatch);
}

TEST(Rollout, ForcedAndDeterministicSelector) {
  Rng rng(1);
  RLBank bank(small_config(2), rng);
  tasks::CartPole env;
  for (const auto& s : collect_rollout(env, bank, rng, 200, Mode::Sample, 0).steps) EXPECT_EQ(s.expert, 0);
  auto& last = bank.selector_actor.layers().back();
  last.W.setZero();
  last.b << 50.0, -50.0;
  for (const auto& s : collect_rollout(env, bank, rng, 200).steps) EXPECT_EQ(s.expert, 0);
  EXPECT_THROW(collect_rollout(env, bank, rng, 10, Mode::Sample, 2), std::out_of_range);
}

TEST(Rollout, TruncationAndDeterminism) {
  Rng rng(2);
  const RLBank bank(small_config(2), rng);
  tasks::CartPole env;
  const Trajectory one = collect_rollout(env, bank, rng, 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_FALSE(one.terminal());
  EXPECT_THROW(collect_rollout(env, bank, rng, 0), std::invalid_argument);

  Rng a(3), b(3);
  tasks::CartPole ea, eb;
  const Trajectory ta = collect_rollout(ea, bank, a, 500), tb = collect_rollout(eb, bank, b, 500);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t t = 0; t < ta.size(); ++t) {
    EXPECT_EQ(ta.steps[t].state, tb.steps[t].state);
    EXPECT_EQ(ta.steps[t].action, tb.steps[t].action);
    EXPECT_EQ(ta.steps[t].expert, tb.steps[t].expert);
  }
}

TEST(Annotate, NoPenaltyGivesReturns) {
  RLConfig c = small_config(2);
  c.rp = params(25, 1e6, 0.99);
  Rng rng(4);
  const RLBank bank(c, rng);
  tasks::CartPole env;
  for (int e = 0; e < 10; ++e) {
    Trajectory tr = collect_rollout(env, bank, rng, 500);
    annotate(tr, bank);
    ASSERT_EQ(tr.F.size(), static_cast<Eigen::Index>(tr.size()));
    ASSERT_EQ(tr.Abar.size(), tr.F.size());
    EXPECT_LT((tr.F - tr.R).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(TrainIteration, SingleExpertHasNoSelectorRate) {
  Rng rng(5);
  RLBank bank(small_config(1), rng);
  tasks::CartPole env;
  for (int i = 0; i < 5; ++i) {
    const RLMetrics m = rl_train_iteration(bank, env, 4, 500, rng);
    EXPECT_EQ(m.rate_xm, 0.0);
    ASSERT_EQ(m.prior_m.size(), 1);
    EXPECT_EQ(m.prior_m(0), 1.0);
  }
  EXPECT_THROW(rl_train_iteration(bank, env, 0, 500, rng), std::invalid_argument);
}

TEST(TrainIteration, SelectorRateWithinLogM) {
  Rng rng(6);
  RLBank bank(small_config(3), rng);
  tasks::CartPole env;
  for (int i = 0; i < 20; ++i) {
    const RLMetrics m = rl_train_iteration(bank, env, 4, 500, rng);
    EXPECT_GE(m.rate_xm, 0.0);
    EXPECT_LE(m.rate_xm, std::log(3.0) + 1e-12);
    EXPECT_NEAR(m.prior_m.sum(), 1.0, 1e-9);
  }
}

TEST(TrainIteration, CriticLossDecreases) {
  constexpr int iters = 100;
  constexpr int window = iters / 10;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    RLBank bank(small_config(2), rng);
    tasks::CartPole env;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < iters; ++i) {
      const double l = rl_train_iteration(bank, env, 8, 500, rng).critic_loss;
      if (i < window) first += l;
      if (i >= iters - window) last += l;
    }
    EXPECT_LT(last, first) << "seed " << seed;
  }
}

TEST(TrainIteration, ZeroResourceExpertsStayAtPrior) {
  RLConfig c = small_config(2);
  c.rp = params(25, 1e-3, 0.99);
  Rng rng(7);
  RLBank bank(c, rng);
  tasks::CartPole env;
  // Full-length run; the score-function gradient pulls the experts in slowly.
  constexpr int iters = 2000;
  double tail = 0.0;
  for (int i = 0; i < iters; ++i) {
    const double kl = rl_train_iteration(bank, env, 8, 500, rng).expert_kl;
    if (i >= iters - iters / 10) tail += kl;
  }
  EXPECT_LT(tail / (iters / 10), 0.01);
}

TEST(Partition, CsvHasOneRowPerVisitedState) {
  Rng rng(8);
  const RLBank bank(small_config(2), rng);
  tasks::CartPole env;
  std::ostringstream os;
  Rng a(9), b(9);
  write_partition_csv(os, env, bank, 3, 500, a);
  const EvalResult ev = evaluate_policy(env, bank, 3, 500, b);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "x,x_dot,theta,theta_dot,expert,p_0,p_1");
  long rows = 0;
  for (int l : ev.lengths) rows += l;
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), rows + 1);
  EXPECT_NEAR(ev.expert_share.sum(), 1.0, 1e-12);
}
