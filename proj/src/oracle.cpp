#include "hexpert/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace hexpert::oracle {

namespace {

Eigen::VectorXd dirichlet_row(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.gamma(1.0);
  return v / v.sum();
}

// KL(p || q) where q is a mixture giving p weight w, so q >= w p and each
// log ratio is at most -log w. The cap only bites when q has underflowed.
double row_kl(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q, double w) {
  const double cap = -std::log(w);
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) d += p(i) * std::min(std::log(p(i) / q(i)), cap);
  return d;
}

}  // namespace

void TabularProblem::validate() const {
  if (utility.rows() < 1 || utility.cols() < 1) throw std::invalid_argument("utility must be non-empty");
  if (num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
  if (!utility.allFinite()) throw std::invalid_argument("utility must be finite");
  require_same_dim(px.size(), utility.rows(), "TabularProblem px vs utility rows");
}

InfoTerms information_terms(const TabularProblem& prob, const Eigen::MatrixXd& sel,
                            const std::vector<Eigen::MatrixXd>& act) {
  const Eigen::Index nx = prob.num_states();
  const Eigen::Index nm = sel.cols();
  const Eigen::VectorXd& px = prob.px.probs();
  require_same_dim(sel.rows(), nx, "information_terms sel rows");
  require_same_dim(static_cast<Eigen::Index>(act.size()), nm, "information_terms act count");

  InfoTerms t;
  const Eigen::VectorXd pm = sel.transpose() * px;
  for (Eigen::Index x = 0; x < nx; ++x)
    for (Eigen::Index m = 0; m < nm; ++m)
      if (sel(x, m) > 0.0) t.rate_xm += px(x) * sel(x, m) * std::min(std::log(sel(x, m) / pm(m)), -std::log(px(x)));

  for (Eigen::Index m = 0; m < nm; ++m) {
    if (pm(m) <= 0.0) continue;
    const Eigen::VectorXd pxm = px.cwiseProduct(sel.col(m));  // p(x, m)
    const Eigen::RowVectorXd py_m = (pxm.transpose() * act[m]) / pm(m);
    for (Eigen::Index x = 0; x < nx; ++x) {
      if (pxm(x) <= 0.0) continue;
      t.expected_utility += pxm(x) * act[m].row(x).dot(prob.utility.row(x));
      t.rate_xy_given_m += pxm(x) * row_kl(act[m].row(x), py_m, pxm(x) / pm(m));
    }
  }
  t.rate_xm = std::max(t.rate_xm, 0.0);
  t.rate_xy_given_m = std::max(t.rate_xy_given_m, 0.0);
  return t;
}

double objective_value(const TabularProblem& prob, const HierSolution& sol, const ResourceParams& rp) {
  const InfoTerms t = information_terms(prob, sol.sel, sol.act);
  return t.expected_utility - t.rate_xm / rp.beta1 - t.rate_xy_given_m / rp.beta2;
}

double free_energy(const TabularProblem& prob, const HierSolution& sol, const ResourceParams& rp,
                   Eigen::Index x, Eigen::Index m) {
  if (x < 0 || x >= prob.num_states()) throw std::out_of_range("free_energy: state index out of range");
  if (m < 0 || m >= static_cast<Eigen::Index>(sol.act.size()))
    throw std::out_of_range("free_energy: expert index out of range");
  const auto row = sol.act[m].row(x);
  const double eu = row.dot(prob.utility.row(x));
  const Simplex post{Eigen::VectorXd(row.transpose())};
  const Simplex prior{Eigen::VectorXd(sol.prior_y.row(m).transpose())};
  return eu - kl(post, prior) / rp.beta2;
}

void recompute_priors(const TabularProblem& prob, HierSolution& sol) {
  const Eigen::VectorXd& px = prob.px.probs();
  sol.prior_m = sol.sel.transpose() * px;
  for (Eigen::Index m = 0; m < sol.sel.cols(); ++m) {
    if (sol.prior_m(m) <= 0.0) continue;
    sol.prior_y.row(m) = (px.cwiseProduct(sol.sel.col(m))).transpose() * sol.act[m] / sol.prior_m(m);
  }
}

HierSolution initial_solution(const TabularProblem& prob, Rng& rng) {
  prob.validate();
  const Eigen::Index nx = prob.num_states();
  const Eigen::Index ny = prob.num_actions();
  const Eigen::Index nm = prob.num_experts;
  HierSolution sol;
  sol.sel.resize(nx, nm);
  for (Eigen::Index x = 0; x < nx; ++x) sol.sel.row(x) = dirichlet_row(nm, rng).transpose();
  sol.act.assign(static_cast<std::size_t>(nm), Eigen::MatrixXd(nx, ny));
  for (auto& a : sol.act)
    for (Eigen::Index x = 0; x < nx; ++x) a.row(x) = dirichlet_row(ny, rng).transpose();
  sol.prior_y = Eigen::MatrixXd::Constant(nm, ny, 1.0 / static_cast<double>(ny));
  recompute_priors(prob, sol);
  return sol;
}

double sweep(const TabularProblem& prob, const ResourceParams& rp, HierSolution& sol) {
  const Eigen::Index nx = prob.num_states();
  const Eigen::Index nm = sol.sel.cols();
  const HierSolution before = sol;

  // Block-coordinate ascent on the variational objective with free priors;
  // each block update is an exact maximization, so the objective cannot
  // decrease.
  auto update_experts = [&] {
    for (Eigen::Index m = 0; m < nm; ++m) {
      const Simplex prior{Eigen::VectorXd(sol.prior_y.row(m).transpose())};
      for (Eigen::Index x = 0; x < nx; ++x)
        sol.act[m].row(x) = gibbs_posterior(prior, prob.utility.row(x).transpose(), rp.beta2).probs().transpose();
    }
  };
  recompute_priors(prob, sol);
  update_experts();
  recompute_priors(prob, sol);
  // Refresh the rows against the new p(y|m) before scoring experts: a row
  // may still carry denormal mass where p(y|m) has underflowed to zero, which
  // would make its KL infinite.
  update_experts();

  const Simplex prior_m{Eigen::VectorXd(sol.prior_m)};
  Eigen::VectorXd f(nm);
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (Eigen::Index m = 0; m < nm; ++m) f(m) = free_energy(prob, sol, rp, x, m);
    sol.sel.row(x) = gibbs_posterior(prior_m, f, rp.beta1).probs().transpose();
  }
  recompute_priors(prob, sol);

  double delta = (sol.sel - before.sel).cwiseAbs().maxCoeff();
  delta = std::max(delta, (sol.prior_m - before.prior_m).cwiseAbs().maxCoeff());
  delta = std::max(delta, (sol.prior_y - before.prior_y).cwiseAbs().maxCoeff());
  for (Eigen::Index m = 0; m < nm; ++m) delta = std::max(delta, (sol.act[m] - before.act[m]).cwiseAbs().maxCoeff());
  return delta;
}

SolveResult solve(const TabularProblem& prob, const ResourceParams& rp, const SolveOptions& opts, Rng& rng) {
  rp.validate();
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solve: tol must be > 0");
  if (opts.max_sweeps < 1) throw std::invalid_argument("solve: max_sweeps must be >= 1");

  SolveResult res;
  res.solution = initial_solution(prob, rng);
  for (int s = 0; s < opts.max_sweeps; ++s) {
    res.last_delta = sweep(prob, rp, res.solution);
    res.sweeps = s + 1;
    res.objective_trace.push_back(objective_value(prob, res.solution, rp));
    if (res.last_delta < opts.tol) {
      res.converged = true;
      break;
    }
  }
  res.solution.objective = res.objective_trace.back();
  return res;
}

TabularProblem random_problem(Eigen::Index num_states, Eigen::Index num_actions, int num_experts, Rng& rng) {
  TabularProblem p;
  p.px = Simplex(dirichlet_row(num_states, rng));
  p.utility.resize(num_states, num_actions);
  for (Eigen::Index x = 0; x < num_states; ++x)
    for (Eigen::Index y = 0; y < num_actions; ++y) p.utility(x, y) = rng.uniform();
  p.num_experts = num_experts;
  return p;
}

}  // namespace hexpert::oracle
