#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hexpert/tasks.hpp"

using namespace hexpert;
using namespace hexpert::tasks;

TEST(Classification, CirclesInnerRadiiBelowOuter) {
  const LabeledDataset d = make_classification("circles", 1000, 0.0, 1);
  ASSERT_EQ(d.size(), 1000);
  double inner_max = 0.0, outer_min = 1e300;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double r = d.inputs.row(i).norm();
    if (d.labels(i) == 1)
      inner_max = std::max(inner_max, r);
    else
      outer_min = std::min(outer_min, r);
  }
  EXPECT_LT(inner_max, outer_min);
}

TEST(Classification, DeterministicAndStandardized) {
  for (const char* name : {"moons", "circles", "blobs"}) {
    const LabeledDataset a = make_classification(name, 300, 0.1, 7);
    const LabeledDataset b = make_classification(name, 300, 0.1, 7);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.labels, b.labels);
    const Eigen::RowVectorXd mean = a.inputs.colwise().mean();
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index c = 0; c < a.dim(); ++c) {
      const double var = (a.inputs.col(c).array() - mean(c)).square().mean();
      EXPECT_NEAR(var, 1.0, 1e-9);
    }
    EXPECT_GE(a.labels.minCoeff(), 0);
    EXPECT_LT(a.labels.maxCoeff(), a.num_classes);
  }
  EXPECT_THROW(make_classification("spirals", 10, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(make_classification("moons", 1, 0.1, 0), std::invalid_argument);
}

TEST(Classification, MoonsBalanced) {
  const LabeledDataset d = make_classification("moons", 10000, 0.1, 3);
  const double share = d.labels.cast<double>().mean();
  EXPECT_NEAR(share, 0.5, 0.01);
}

TEST(Classification, KfoldPartitionsRows) {
  const LabeledDataset d = make_classification("blobs", 103, 0.2, 4);
  Eigen::Index total = 0;
  for (int k = 0; k < 10; ++k) {
    const FoldSplit s = kfold_split(d, 10, k, 9);
    EXPECT_EQ(s.train.size() + s.test.size(), d.size());
    total += s.test.size();
  }
  EXPECT_EQ(total, d.size());
}

TEST(Mixture, ComponentMeansConverge) {
  const std::vector<Eigen::VectorXd> means{Eigen::Vector2d(-1, -1), Eigen::Vector2d(-1, 1), Eigen::Vector2d(1, -1),
                                           Eigen::Vector2d(1, 1)};
  const Eigen::MatrixXd x = sample_mixture(means, 0.15, 4000, 11);
  ASSERT_EQ(x.rows(), 4000);
  for (std::size_t c = 0; c < 4; ++c) {
    Eigen::Vector2d m = Eigen::Vector2d::Zero();
    for (Eigen::Index i = static_cast<Eigen::Index>(c); i < x.rows(); i += 4) m += x.row(i).transpose();
    m /= 1000.0;
    EXPECT_LT((m - means[c]).norm(), 0.05);
  }
}

TEST(Mixture, ShapeAndDegenerateCovariance) {
  const std::vector<Eigen::VectorXd> means{Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(-1, 0, 4)};
  const Eigen::MatrixXd one = sample_mixture(means, 0.15, 1, 2);
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one.cols(), 3);
  const Eigen::MatrixXd tight = sample_mixture(means, 1e-12, 50, 3);
  for (Eigen::Index i = 0; i < tight.rows(); ++i)
    EXPECT_LT((tight.row(i).transpose() - means[static_cast<std::size_t>(i % 2)]).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_THROW(sample_mixture({}, 0.15, 10, 0), std::invalid_argument);
  EXPECT_THROW(sample_mixture(means, 0.0, 10, 0), std::invalid_argument);
}

TEST(Sine, Identities) {
  EXPECT_NEAR((SineTask{1.0, 0.0})(std::numbers::pi / 2), 1.0, 1e-15);
  EXPECT_NEAR((SineTask{2.0, std::numbers::pi})(0.0), 0.0, 1e-15);
}

TEST(Sine, AmplitudeMean) {
  Rng rng(5);
  double sum = 0.0;
  constexpr int n = 10000;
  for (int i = 0; i < n; ++i) {
    const SineTask t = sample_sine_task(rng);
    ASSERT_GE(t.a, 0.1);
    ASSERT_LE(t.a, 5.0);
    ASSERT_GE(t.b, 0.0);
    ASSERT_LE(t.b, 2.0 * std::numbers::pi);
    sum += t.a;
  }
  const double expected = 0.5 * (0.1 + 5.0);
  EXPECT_NEAR(expected, 2.55, 1e-12);
  EXPECT_LT(std::abs(sum / n - expected) / expected, 0.02);
}

TEST(Sine, DatasetSplits) {
  Rng rng(6);
  const SineTask t{3.0, 1.0};
  const auto [train, val] = sine_dataset(t, 10, {-5.0, 5.0}, rng);
  ASSERT_EQ(train.size(), 10);
  ASSERT_EQ(val.size(), 10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    EXPECT_EQ(train.y(i), t(train.x(i)));
    EXPECT_GE(train.x(i), -5.0);
    EXPECT_LE(train.x(i), 5.0);
    for (Eigen::Index j = 0; j < 10; ++j) EXPECT_NE(train.x(i), val.x(j));
  }
  EXPECT_THROW(sine_dataset(t, 0, {-5.0, 5.0}, rng), std::invalid_argument);
  EXPECT_THROW(sine_dataset(t, 3, {1.0, 1.0}, rng), std::invalid_argument);
}

TEST(CartPole, UprightIsFixedPoint) {
  const CartPoleStep r = cartpole_step(CartPoleState{}, 0.0);
  EXPECT_EQ(r.next.theta, 0.0);
  EXPECT_EQ(r.next.theta_dot, 0.0);
  EXPECT_FALSE(r.done);
  EXPECT_EQ(r.reward, 1.0);
}

TEST(CartPole, AngleThreshold) {
  CartPoleState s;
  s.theta = 13.0 * std::numbers::pi / 180.0;
  EXPECT_TRUE(cartpole_step(s, 0.0).done);
  s.theta = 0.0;
  s.x = 2.5;
  EXPECT_TRUE(cartpole_step(s, 0.0).done);
  const CartPoleStep last = cartpole_step(CartPoleState{}, 0.0, 499);
  EXPECT_TRUE(last.done);
  EXPECT_TRUE(last.truncated);
}

TEST(CartPole, OneStepHandIntegration) {
  const CartPoleStep r = cartpole_step(CartPoleState{}, 1.0);
  // Classic dynamics at the upright rest state with F = 10 N.
  const double total = 1.1, pml = 0.1 * 0.5;
  const double temp = 10.0 / total;
  const double theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / total));
  const double x_acc = temp - pml * theta_acc / total;
  EXPECT_NEAR(r.next.x_dot, 0.02 * x_acc, 1e-12);
  EXPECT_NEAR(r.next.theta_dot, 0.02 * theta_acc, 1e-12);
  EXPECT_GT(r.next.x_dot, 0.0);
  EXPECT_LT(r.next.theta_dot, 0.0);
  const CartPoleStep clipped = cartpole_step(CartPoleState{}, 7.0);
  EXPECT_EQ(clipped.next.x_dot, r.next.x_dot);
  CartPoleState bad;
  bad.x = std::nan("");
  EXPECT_THROW(cartpole_step(bad, 0.0), std::domain_error);
}

TEST(CartPole, ResetRangeAndLongRunFinite) {
  Rng rng(8);
  CartPole env;
  for (int e = 0; e < 100; ++e) {
    const CartPoleState s = env.reset(rng);
    EXPECT_LE(s.vec().cwiseAbs().maxCoeff(), 0.05);
  }
  // Ignore termination and keep integrating random forces.
  CartPoleParams p;
  p.max_steps = 1 << 30;
  CartPoleState s = cartpole_reset(rng);
  for (int i = 0; i < 1000000; ++i) {
    s = cartpole_step(s, rng.uniform(-1.0, 1.0), 0, p).next;
    if (s.theta > std::numbers::pi) s.theta -= 2.0 * std::numbers::pi;
    if (s.theta < -std::numbers::pi) s.theta += 2.0 * std::numbers::pi;
    ASSERT_TRUE(s.vec().allFinite()) << "step " << i;
  }
}

TEST(Csv, Headers) {
  std::ostringstream os;
  write_dataset_csv(os, make_classification("moons", 4, 0.0, 1));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "x1,x2,label");
  std::ostringstream tr;
  write_trace_csv(tr, {TraceRow{}});
  EXPECT_EQ(tr.str().substr(0, tr.str().find('\n')).substr(0, 2), "t,");
}
