#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

#include "hexpert/oracle.hpp"
#include "hexpert/serialize.hpp"

using namespace hexpert;
using namespace hexpert::oracle;

namespace {

TabularProblem identity_problem(int M) {
  TabularProblem p;
  p.px = Simplex::uniform(2);
  p.utility = Eigen::Matrix2d::Identity();
  p.num_experts = M;
  return p;
}

ResourceParams betas(double b1, double b2) {
  ResourceParams rp;
  rp.beta1 = b1;
  rp.beta2 = b2;
  return rp;
}

// Direct evaluation from the joint p(x,m,y), independent of the library's
// bookkeeping.
double reference_objective(const TabularProblem& p, const HierSolution& s, const ResourceParams& rp) {
  const Eigen::Index X = p.num_states(), Y = p.num_actions();
  const int M = p.num_experts;
  double eu = 0.0;
  Eigen::MatrixXd pxm(X, M);
  for (Eigen::Index x = 0; x < X; ++x)
    for (int m = 0; m < M; ++m) {
      pxm(x, m) = p.px(x) * s.sel(x, m);
      for (Eigen::Index y = 0; y < Y; ++y) eu += pxm(x, m) * s.act[m](x, y) * p.utility(x, y);
    }
  double ixm = 0.0;
  const Eigen::RowVectorXd pm = pxm.colwise().sum();
  for (Eigen::Index x = 0; x < X; ++x)
    for (int m = 0; m < M; ++m)
      if (pxm(x, m) > 0) ixm += pxm(x, m) * std::log(pxm(x, m) / (p.px(x) * pm(m)));
  double ixy = 0.0;
  for (int m = 0; m < M; ++m) {
    if (pm(m) <= 0) continue;
    Eigen::VectorXd py = Eigen::VectorXd::Zero(Y);
    for (Eigen::Index x = 0; x < X; ++x) py += (pxm(x, m) / pm(m)) * s.act[m].row(x).transpose();
    for (Eigen::Index x = 0; x < X; ++x)
      for (Eigen::Index y = 0; y < Y; ++y) {
        const double j = pxm(x, m) * s.act[m](x, y);
        if (j > 0) ixy += j * std::log(s.act[m](x, y) / py(y));
      }
  }
  return eu - ixm / rp.beta1 - ixy / rp.beta2;
}

}  // namespace

TEST(ObjectiveValue, ZeroRateSystemIsPriorUtility) {
  Rng rng(2);
  const TabularProblem p = random_problem(4, 3, 2, rng);
  HierSolution s;
  s.prior_m = Eigen::Vector2d(0.3, 0.7);
  s.prior_y = Eigen::MatrixXd(2, 3);
  s.prior_y << 0.2, 0.3, 0.5, 0.6, 0.2, 0.2;
  s.sel = s.prior_m.transpose().replicate(4, 1);
  for (int m = 0; m < 2; ++m) s.act.push_back(s.prior_y.row(m).replicate(4, 1));
  double expected = 0.0;
  for (Eigen::Index x = 0; x < 4; ++x)
    for (int m = 0; m < 2; ++m) expected += p.px(x) * s.prior_m(m) * s.prior_y.row(m).dot(p.utility.row(x));
  EXPECT_NEAR(objective_value(p, s, betas(3, 4)), expected, 1e-12);
}

TEST(ObjectiveValue, DeterministicIdentitySystem) {
  const TabularProblem p = identity_problem(2);
  HierSolution s;
  s.sel = Eigen::Matrix2d::Identity();
  s.act = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  s.prior_m = Eigen::Vector2d(0.5, 0.5);
  s.prior_y = Eigen::Matrix2d::Identity();
  const double v = objective_value(p, s, betas(1, 1));
  EXPECT_NEAR(v, reference_objective(p, s, betas(1, 1)), 1e-12);
  EXPECT_NEAR(v, 1.0 - std::log(2.0), 1e-12);
  EXPECT_NEAR(v, 0.306853, 1e-6);
}

TEST(ObjectiveValue, UtilityFreeCaseIsNonPositive) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    TabularProblem p = random_problem(4, 3, 3, rng);
    p.utility.setZero();
    Rng r2(t);
    const HierSolution s = initial_solution(p, r2);
    EXPECT_LE(objective_value(p, s, betas(2, 3)), 1e-15);
  }
}

TEST(FreeEnergy, Examples) {
  TabularProblem p = identity_problem(1);
  HierSolution s;
  s.sel = Eigen::MatrixXd::Ones(2, 1);
  s.prior_m = Eigen::VectorXd::Ones(1);
  s.prior_y = Eigen::RowVector2d(0.5, 0.5);
  s.act = {Eigen::MatrixXd::Constant(2, 2, 0.5)};
  EXPECT_NEAR(free_energy(p, s, betas(1, 1), 0, 0), 0.5, 1e-12);

  s.act[0] << 1, 0, 0, 1;
  EXPECT_NEAR(free_energy(p, s, betas(1, 1), 0, 0), 1.0 - std::log(2.0), 1e-12);
  EXPECT_NEAR(free_energy(p, s, betas(1, 1e12), 0, 0), 1.0, 1e-9);
  EXPECT_THROW(free_energy(p, s, betas(1, 1), 2, 0), std::out_of_range);
  EXPECT_THROW(free_energy(p, s, betas(1, 1), 0, 1), std::out_of_range);
}

TEST(Solve, RationalLimit) {
  Rng rng(1);
  SolveOptions o;
  const SolveResult r = solve(identity_problem(2), betas(1e6, 1e6), o, rng);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.solution.objective, 1.0, 1e-3);
}

TEST(Solve, ZeroResourceLimit) {
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const TabularProblem p = random_problem(5, 3, 3, rng);
    const SolveResult r = solve(p, betas(1e-6, 1e-6), {}, rng);
    const InfoTerms info = information_terms(p, r.solution.sel, r.solution.act);
    EXPECT_LT(info.rate_xm, 1e-4);
    EXPECT_LT(info.rate_xy_given_m, 1e-4);
  }
}

TEST(Solve, SelfConsistencyOnSeededProblem) {
  Rng prng(7);
  const TabularProblem p = random_problem(4, 3, 2, prng);
  Rng rng(7);
  const ResourceParams rp = betas(5, 5);
  SolveOptions o;
  o.tol = 1e-10;
  o.max_sweeps = 100000;
  const SolveResult r = solve(p, rp, o, rng);
  ASSERT_TRUE(r.converged);
  HierSolution again = r.solution;
  EXPECT_LT(sweep(p, rp, again), 1e-6);
  EXPECT_NEAR(r.solution.objective, objective_value(p, r.solution, rp), 1e-9);
  EXPECT_NEAR(r.solution.objective, reference_objective(p, r.solution, rp), 1e-9);
}

TEST(Solve, MonotoneTraceAndMarginalConsistency) {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    const auto X = 1 + static_cast<Eigen::Index>(rng.below(8));
    const auto Y = 1 + static_cast<Eigen::Index>(rng.below(4));
    const int M = 1 + static_cast<int>(rng.below(4));
    const TabularProblem p = random_problem(X, Y, M, rng);
    const ResourceParams rp = betas(rng.uniform(0.5, 20), rng.uniform(0.5, 20));
    SolveOptions o;
    o.tol = 1e-10;
    o.max_sweeps = 100000;
    const SolveResult r = solve(p, rp, o, rng);
    ASSERT_TRUE(r.converged);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      EXPECT_GE(r.objective_trace[i], r.objective_trace[i - 1] - 1e-10);
    const Eigen::VectorXd pm = r.solution.sel.transpose() * p.px.probs();
    EXPECT_LT((pm - r.solution.prior_m).cwiseAbs().maxCoeff(), 1e-8);
    for (int m = 0; m < M; ++m) {
      if (pm(m) < 1e-9) continue;
      const Eigen::VectorXd w = p.px.probs().cwiseProduct(r.solution.sel.col(m)) / pm(m);
      const Eigen::VectorXd py = r.solution.act[m].transpose() * w;
      EXPECT_LT((py - r.solution.prior_y.row(m).transpose()).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

// Problem 19 of this stream drives some p(y|m) entries below the denormal
// range while expert rows still hold denormal mass there.
TEST(Solve, SurvivesUnderflowInPriors) {
  Rng rng(101);
  for (int t = 0; t < 50; ++t) {
    const auto X = 1 + static_cast<Eigen::Index>(rng.below(8));
    const auto Y = 1 + static_cast<Eigen::Index>(rng.below(4));
    const int M = 1 + static_cast<int>(rng.below(4));
    const TabularProblem p = random_problem(X, Y, M, rng);
    const ResourceParams rp = betas(rng.uniform(0.5, 20), rng.uniform(0.5, 20));
    const SolveResult r = solve(p, rp, {1e-10, 100000}, rng);
    ASSERT_TRUE(r.converged) << "problem " << t;
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      ASSERT_TRUE(std::isfinite(r.objective_trace[i])) << "problem " << t;
      EXPECT_GE(r.objective_trace[i], r.objective_trace[i - 1] - 1e-10) << "problem " << t;
    }
    EXPECT_NEAR(r.solution.objective, reference_objective(p, r.solution, rp), 1e-9) << "problem " << t;
  }
}

TEST(Solve, FlagsExhaustedBudget) {
  Rng rng(3);
  const TabularProblem p = random_problem(6, 4, 3, rng);
  SolveOptions o;
  o.max_sweeps = 1;
  const SolveResult r = solve(p, betas(5, 5), o, rng);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.sweeps, 1);
  EXPECT_GT(r.last_delta, 0.0);
  EXPECT_THROW(solve(p, betas(5, 5), {0.0, 10}, rng), std::invalid_argument);
}

// Fixed points need not be unique; disagreement is reported, not asserted.
TEST(Solve, MultiStartReport) {
  Rng prng(21);
  int disagree = 0;
  for (int t = 0; t < 10; ++t) {
    const TabularProblem p = random_problem(4, 3, 2, prng);
    double lo = 1e300, hi = -1e300;
    for (int s = 0; s < 10; ++s) {
      Rng rng = Rng(100 + t).derive("start", s);
      const double v = solve(p, betas(5, 5), {1e-10, 100000}, rng).solution.objective;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > 1e-4) ++disagree;
  }
  std::cout << "multi-start disagreement on " << disagree << " of 10 problems\n";
  SUCCEED();
}

TEST(Solve, JsonRoundTrip) {
  Rng rng(5);
  const TabularProblem p = random_problem(3, 2, 2, rng);
  const SolveResult r = solve(p, betas(5, 5), {}, rng);
  const TabularProblem p2 = tabular_problem_from_json(Json::parse(to_json(p).dump()));
  EXPECT_EQ(p2.utility, p.utility);
  EXPECT_EQ(p2.px.probs(), p.px.probs());
  const HierSolution s2 = hier_solution_from_json(Json::parse(to_json(r.solution).dump()));
  EXPECT_EQ(s2.sel, r.solution.sel);
  EXPECT_EQ(s2.act[1], r.solution.act[1]);
  EXPECT_EQ(s2.objective, r.solution.objective);
}

TEST(TabularProblem, Validation) {
  TabularProblem p = identity_problem(0);
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.num_experts = 1;
  p.utility(0, 0) = std::nan("");
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
