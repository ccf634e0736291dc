#pragma once

// Exact alternating solver for the discrete two-stage free-energy problem
//
//   max  E[U(x,y)] - I(X;M)/beta1 - I(X;Y|M)/beta2
//
// over selector rows p(m|x) and expert rows p(y|x,m). Used as ground truth
// for the online learners.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/rng.hpp"

namespace hexpert::oracle {

struct TabularProblem {
  Simplex px;                // p(x), |X|
  Eigen::MatrixXd utility;   // |X| x |Y|
  int num_experts = 1;

  Eigen::Index num_states() const { return utility.rows(); }
  Eigen::Index num_actions() const { return utility.cols(); }
  void validate() const;
};

// Tables are stored densely; every row of sel, act[m], prior_y and prior_m
// itself is a probability vector.
struct HierSolution {
  Eigen::MatrixXd sel;               // |X| x M, p(m|x)
  std::vector<Eigen::MatrixXd> act;  // M tables of |X| x |Y|, p(y|x,m)
  Eigen::VectorXd prior_m;           // M, p(m)
  Eigen::MatrixXd prior_y;           // M x |Y|, p(y|m)
  double objective = 0.0;
};

struct InfoTerms {
  double expected_utility = 0.0;
  double rate_xm = 0.0;          // I(X;M)
  double rate_xy_given_m = 0.0;  // I(X;Y|M)
};

// Expected utility and both mutual informations of the joint induced by
// (px, sel, act). The stored priors are not consulted.
InfoTerms information_terms(const TabularProblem& prob, const Eigen::MatrixXd& sel,
                            const std::vector<Eigen::MatrixXd>& act);

double objective_value(const TabularProblem& prob, const HierSolution& sol, const ResourceParams& rp);

// E_act[U(x,.)] - KL(act(x,m) || prior_y(m)) / beta2.
double free_energy(const TabularProblem& prob, const HierSolution& sol, const ResourceParams& rp,
                   Eigen::Index x, Eigen::Index m);

// Exact marginals p(m) and p(y|m) of the current tables. Experts with zero
// mass keep their previous p(y|m) row.
void recompute_priors(const TabularProblem& prob, HierSolution& sol);

struct SolveOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
};

struct SolveResult {
  HierSolution solution;
  bool converged = false;
  double last_delta = 0.0;  // max entry change during the final sweep
  int sweeps = 0;
  std::vector<double> objective_trace;  // objective after each sweep
};

struct NotConverged : std::runtime_error {
  explicit NotConverged(double delta)
      : std::runtime_error("oracle did not converge; last sweep delta " + std::to_string(delta)),
        last_delta(delta) {}
  double last_delta;
};

// Random initial tables: rows from a symmetric Dirichlet(1), priors set to
// the induced marginals.
HierSolution initial_solution(const TabularProblem& prob, Rng& rng);

// One coordinate-ascent sweep (experts, then selector). Returns the largest
// absolute change of any table entry.
double sweep(const TabularProblem& prob, const ResourceParams& rp, HierSolution& sol);

// Alternates sweeps until a sweep changes no entry by tol or more. The result
// is flagged (not thrown) when max_sweeps runs out.
SolveResult solve(const TabularProblem& prob, const ResourceParams& rp, const SolveOptions& opts, Rng& rng);

// Random problem with utilities uniform in [0,1] and p(x) from Dirichlet(1).
TabularProblem random_problem(Eigen::Index num_states, Eigen::Index num_actions, int num_experts, Rng& rng);

}  // namespace hexpert::oracle
