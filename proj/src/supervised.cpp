#include "hexpert/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hexpert::supervised {

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

double log_sum_exp(const Eigen::VectorXd& z) {
  const double mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

// Utility, KL and d f / d raw for one expert at one input.
struct ExpertEval {
  double utility = 0.0;
  double kl = 0.0;
  Eigen::VectorXd probs;  // softmax experts
  GaussianParams gauss;   // regression experts
  Eigen::VectorXd grad_raw;
};

ExpertEval eval_expert(const ExpertBank& bank, int m, const Eigen::VectorXd& x, const Target& target, TapeD& tape,
                       bool want_grad) {
  if (m < 0 || m >= bank.num_experts()) throw std::out_of_range("expert index out of range");
  const Eigen::VectorXd& raw = bank.experts[m].forward(x, tape);
  const double inv_b2 = 1.0 / bank.rp.beta2;
  ExpertEval e;

  if (bank.config.task == Task::Regression) {
    const GaussianPrior& pr = bank.prior_reg[m];
    e.gauss = gaussian_head(raw);
    const Eigen::VectorXd prior_log_std = pr.log_std();
    const Eigen::VectorXd diff = e.gauss.mean.array() - target.value;
    e.utility = -diff.squaredNorm();
    e.kl = gaussian_kl(e.gauss.mean, e.gauss.log_std, pr.mean, prior_log_std);
    if (want_grad) {
      Eigen::VectorXd gm, gs;
      gaussian_kl_grad(e.gauss.mean, e.gauss.log_std, pr.mean, prior_log_std, gm, gs);
      e.grad_raw = gaussian_head_backward(raw, Eigen::VectorXd(-2.0 * diff - inv_b2 * gm), Eigen::VectorXd(-inv_b2 * gs));
    }
    return e;
  }

  const Eigen::VectorXd logp = raw.array() - log_sum_exp(raw);
  e.probs = logp.array().exp();
  e.probs /= e.probs.sum();
  const Eigen::VectorXd logq = bank.prior_y[m].floored().probs().array().log();
  const Eigen::VectorXd log_ratio = logp - logq;
  e.kl = std::max(0.0, e.probs.dot(log_ratio));

  if (bank.config.task == Task::Classification) {
    if (target.label < 0 || target.label >= raw.size()) throw std::out_of_range("class label out of range");
    e.utility = logp(target.label);
    if (want_grad) {
      e.grad_raw = -e.probs;
      e.grad_raw(target.label) += 1.0;
    }
  } else {
    require_same_dim(target.utility.size(), raw.size(), "tabular utility row");
    e.utility = e.probs.dot(target.utility);
    if (want_grad) e.grad_raw = e.probs.array() * (target.utility.array() - e.utility);
  }
  if (want_grad) e.grad_raw -= inv_b2 * (e.probs.array() * (log_ratio.array() - e.kl)).matrix();
  return e;
}

}  // namespace

ExpertBank::ExpertBank(const BankConfig& cfg, Rng& rng) : config(cfg), rp(cfg.rp) {
  rp.validate();
  if (cfg.num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
  if (cfg.input_dim < 1 || cfg.num_outputs < 1) throw std::invalid_argument("input and output sizes must be >= 1");
  selector = NetD(layer_sizes(cfg.input_dim, cfg.selector_hidden, cfg.num_experts), cfg.activation, Head::Softmax,
                  rng);
  selector_opt = AdamD(selector, cfg.selector_adam);
  const bool reg = cfg.task == Task::Regression;
  for (int m = 0; m < cfg.num_experts; ++m) {
    experts.emplace_back(layer_sizes(cfg.input_dim, cfg.expert_hidden, reg ? 2 * cfg.num_outputs : cfg.num_outputs),
                         cfg.activation, reg ? Head::Gaussian : Head::Softmax, rng);
    expert_opt.emplace_back(experts.back(), cfg.expert_adam);
    if (reg)
      prior_reg.push_back({Eigen::VectorXd::Zero(cfg.num_outputs), Eigen::VectorXd::Ones(cfg.num_outputs)});
    else
      prior_y.push_back(Simplex::uniform(cfg.num_outputs));
  }
  prior_m = Simplex::uniform(cfg.num_experts);
}

Simplex ExpertBank::selector_posterior(const Eigen::VectorXd& x) const {
  TapeD tape;
  return softmax_simplex(selector.forward(x, tape));
}

Simplex ExpertBank::expert_posterior(int m, const Eigen::VectorXd& x) const {
  if (m < 0 || m >= num_experts()) throw std::out_of_range("expert index out of range");
  if (config.task == Task::Regression) throw std::logic_error("regression experts have Gaussian heads");
  TapeD tape;
  return softmax_simplex(experts[m].forward(x, tape));
}

GaussianParams ExpertBank::expert_gaussian(int m, const Eigen::VectorXd& x) const {
  if (m < 0 || m >= num_experts()) throw std::out_of_range("expert index out of range");
  if (config.task != Task::Regression) throw std::logic_error("softmax experts have no Gaussian head");
  TapeD tape;
  return gaussian_head(experts[m].forward(x, tape));
}

Eigen::VectorXd ExpertBank::mixture(const Eigen::VectorXd& x) const {
  const Simplex sel = selector_posterior(x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(config.num_outputs);
  for (int m = 0; m < num_experts(); ++m) out += sel[m] * expert_posterior(m, x).probs();
  return out;
}

Target Batch::target(Eigen::Index i) const {
  Target t;
  if (labels.size() > 0) t.label = labels(i);
  if (targets.size() > 0) t.value = targets(i);
  if (utilities.rows() > 0) t.utility = utilities.row(i).transpose();
  return t;
}

double expert_free_energy(const ExpertBank& bank, int m, const Eigen::VectorXd& x, const Target& target) {
  TapeD tape;
  const ExpertEval e = eval_expert(bank, m, x, target, tape, false);
  return e.utility - e.kl / bank.rp.beta2;
}

StepMetrics train_step(ExpertBank& bank, const Batch& batch, Rng& rng) {
  const Eigen::Index n = batch.size();
  if (n < 1) throw std::invalid_argument("train_step: empty batch");
  const int M = bank.num_experts();
  const double inv_b1 = 1.0 / bank.rp.beta1;

  ParamSetD sel_grad = bank.selector.zeros_like();
  std::vector<ParamSetD> exp_grad;
  for (const auto& e : bank.experts) exp_grad.push_back(e.zeros_like());
  std::vector<int> counts(static_cast<std::size_t>(M), 0);
  TapeD sel_tape, exp_tape;
  StepMetrics out;

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = batch.inputs.row(i).transpose();
    const Target target = batch.target(i);

    const Eigen::VectorXd p_sel = softmax(bank.selector.forward(x, sel_tape));
    const Simplex sel{p_sel / p_sel.sum()};
    const int m = static_cast<int>(sample(sel, rng));
    const Simplex q_m = bank.prior_m.floored();

    ExpertEval e = eval_expert(bank, m, x, target, exp_tape, true);
    const double f = e.utility - e.kl / bank.rp.beta2;

    if (!bank.baseline_init) {
      bank.baseline = f;
      bank.baseline_init = true;
    }
    // Score-function estimate; the loss is the negated objective.
    const double score = (f - bank.baseline) - inv_b1 * (std::log(std::max(p_sel(m), kProbFloor)) - std::log(q_m[m]));
    Eigen::VectorXd g_sel = score * p_sel;
    g_sel(m) -= score;
    bank.selector.backward(sel_tape, g_sel, sel_grad);

    bank.experts[m].backward(exp_tape, Eigen::VectorXd(-e.grad_raw), exp_grad[m]);
    ++counts[static_cast<std::size_t>(m)];

    bank.baseline = bank.config.baseline_decay * bank.baseline + (1.0 - bank.config.baseline_decay) * f;
    bank.prior_m = ema_update(bank.prior_m, sel, bank.rp.lambda2);
    if (bank.config.task == Task::Regression) {
      GaussianPrior& pr = bank.prior_reg[m];
      const double l = bank.rp.lambda1;
      pr.mean = l * pr.mean + (1.0 - l) * e.gauss.mean;
      pr.var = l * pr.var + (1.0 - l) * (2.0 * e.gauss.log_std).array().exp().matrix();
    } else {
      bank.prior_y[m] = ema_update(bank.prior_y[m], Simplex(e.probs), bank.rp.lambda1);
    }

    out.utility += e.utility;
    out.free_energy += f;
    out.expert_kl += e.kl;
    out.rate_xm += kl(sel, q_m);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  scale(sel_grad, inv_n);
  bank.selector_opt.step(bank.selector, sel_grad);
  for (int m = 0; m < M; ++m) {
    if (counts[static_cast<std::size_t>(m)] == 0) continue;
    scale(exp_grad[m], inv_n);
    bank.expert_opt[m].step(bank.experts[m], exp_grad[m]);
  }
  out.utility *= inv_n;
  out.free_energy *= inv_n;
  out.expert_kl *= inv_n;
  out.rate_xm *= inv_n;
  return out;
}

EvalMetrics evaluate(const ExpertBank& bank, const Batch& data) {
  const Eigen::Index n = data.size();
  if (n < 1) throw std::invalid_argument("evaluate: empty dataset");
  const int M = bank.num_experts();
  const Simplex q_m = bank.prior_m.floored();
  TapeD tape;
  EvalMetrics out;
  out.usage = Eigen::VectorXd::Zero(M);
  long correct = 0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.inputs.row(i).transpose();
    const Target target = data.target(i);
    const Simplex sel = softmax_simplex(bank.selector.forward(x, tape));
    out.rate_xm += kl(sel, q_m);
    out.usage += sel.probs();

    Eigen::VectorXd mix = Eigen::VectorXd::Zero(bank.config.task == Task::Regression ? 1 : bank.config.num_outputs);
    for (int m = 0; m < M; ++m) {
      const ExpertEval e = eval_expert(bank, m, x, target, tape, false);
      out.rate_xy_given_m += sel[m] * e.kl;
      out.utility += sel[m] * e.utility;
      mix += sel[m] * (bank.config.task == Task::Regression ? e.gauss.mean : e.probs);
    }
    if (bank.config.task == Task::Classification) {
      Eigen::Index best;
      mix.maxCoeff(&best);
      if (best == target.label) ++correct;
    } else if (bank.config.task == Task::Regression) {
      out.mse += (mix.array() - target.value).square().sum();
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.accuracy = static_cast<double>(correct) * inv_n;
  out.mse *= inv_n;
  out.utility *= inv_n;
  out.rate_xm *= inv_n;
  out.rate_xy_given_m *= inv_n;
  out.usage *= inv_n;
  return out;
}

Batch to_batch(const tasks::LabeledDataset& data) {
  Batch b;
  b.inputs = data.inputs;
  b.labels = data.labels;
  return b;
}

Batch sample_batch(const Batch& data, Eigen::Index size, Rng& rng) {
  if (data.size() < 1) throw std::invalid_argument("sample_batch: empty data");
  Batch b;
  b.inputs.resize(size, data.inputs.cols());
  if (data.labels.size() > 0) b.labels.resize(size);
  if (data.targets.size() > 0) b.targets.resize(size);
  if (data.utilities.rows() > 0) b.utilities.resize(size, data.utilities.cols());
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.size())));
    b.inputs.row(i) = data.inputs.row(r);
    if (data.labels.size() > 0) b.labels(i) = data.labels(r);
    if (data.targets.size() > 0) b.targets(i) = data.targets(r);
    if (data.utilities.rows() > 0) b.utilities.row(i) = data.utilities.row(r);
  }
  return b;
}

ExpertBank make_tabular_bank(const oracle::TabularProblem& prob, const ResourceParams& rp, AdamConfig adam,
                             Rng& rng) {
  prob.validate();
  BankConfig cfg;
  cfg.task = Task::Tabular;
  cfg.input_dim = static_cast<int>(prob.num_states());
  cfg.num_outputs = static_cast<int>(prob.num_actions());
  cfg.num_experts = prob.num_experts;
  cfg.selector_hidden = {};
  cfg.expert_hidden = {};
  cfg.rp = rp;
  cfg.selector_adam = adam;
  cfg.expert_adam = adam;
  return ExpertBank(cfg, rng);
}

Batch sample_tabular_batch(const oracle::TabularProblem& prob, Eigen::Index size, Rng& rng) {
  Batch b;
  b.inputs = Eigen::MatrixXd::Zero(size, prob.num_states());
  b.utilities.resize(size, prob.num_actions());
  for (Eigen::Index i = 0; i < size; ++i) {
    const Eigen::Index x = sample(prob.px, rng);
    b.inputs(i, x) = 1.0;
    b.utilities.row(i) = prob.utility.row(x);
  }
  return b;
}

oracle::HierSolution extract_tables(const ExpertBank& bank, const oracle::TabularProblem& prob,
                                    const ResourceParams& rp) {
  const Eigen::Index nx = prob.num_states();
  const int M = bank.num_experts();
  oracle::HierSolution sol;
  sol.sel.resize(nx, M);
  sol.act.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(nx, prob.num_actions()));
  for (Eigen::Index x = 0; x < nx; ++x) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(nx, x);
    sol.sel.row(x) = bank.selector_posterior(e).probs().transpose();
    for (int m = 0; m < M; ++m) sol.act[m].row(x) = bank.expert_posterior(m, e).probs().transpose();
  }
  sol.prior_y = Eigen::MatrixXd::Constant(M, prob.num_actions(), 1.0 / static_cast<double>(prob.num_actions()));
  oracle::recompute_priors(prob, sol);
  sol.objective = oracle::objective_value(prob, sol, rp);
  return sol;
}

}  // namespace hexpert::supervised
