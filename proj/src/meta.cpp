#include "hexpert/meta.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "hexpert/csv.hpp"

namespace hexpert::meta {

namespace {

std::vector<int> sizes_of(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

// Per-point loss huber(mean - y) + scale_kl * KL(head || prior), accumulated
// into grads. Returns the loss.
double expert_point_loss(const NetD& expert, const supervised::GaussianPrior& prior, double x, double y,
                         double delta, double scale_kl, TapeD& tape, ParamSetD* grads) {
  const Eigen::VectorXd& raw = expert.forward(Eigen::VectorXd::Constant(1, x), tape);
  const GaussianParams g = gaussian_head(raw);
  const double r = g.mean(0) - y;
  double loss = huber(r, delta);
  Eigen::VectorXd gm = Eigen::VectorXd::Constant(1, huber_grad(r, delta));
  Eigen::VectorXd gs = Eigen::VectorXd::Zero(1);
  if (scale_kl != 0.0) {
    const Eigen::VectorXd prior_ls = prior.log_std();
    loss += scale_kl * gaussian_kl(g.mean, g.log_std, prior.mean, prior_ls);
    Eigen::VectorXd km, ks;
    gaussian_kl_grad(g.mean, g.log_std, prior.mean, prior_ls, km, ks);
    gm += scale_kl * km;
    gs += scale_kl * ks;
  }
  if (grads) expert.backward(tape, gaussian_head_backward(raw, gm, gs), *grads);
  return loss;
}

}  // namespace

TaskDataset make_task(const tasks::SineTask& task, int K, tasks::XRange range, Rng& rng) {
  auto [train, val] = tasks::sine_dataset(task, K, range, rng);
  return {std::move(train), std::move(val), task};
}

TaskDataset sample_task(int K, tasks::XRange range, Rng& rng) {
  const tasks::SineTask t = tasks::sample_sine_task(rng);
  return make_task(t, K, range, rng);
}

Eigen::VectorXd embed_regression(const tasks::RegressionSplit& split, int bins, tasks::XRange range) {
  if (bins < 1) throw std::invalid_argument("embed_regression: bins must be >= 1");
  if (!(range.hi > range.lo)) throw std::invalid_argument("embed_regression: empty x range");
  std::vector<std::vector<double>> members(static_cast<std::size_t>(bins));
  const double width = (range.hi - range.lo) / bins;
  for (Eigen::Index i = 0; i < split.size(); ++i) {
    const double pos = std::floor((split.x(i) - range.lo) / width);
    const int bin = static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    members[static_cast<std::size_t>(bin)].push_back(split.y(i));
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(bins);
  for (int k = 0; k < bins; ++k) {
    auto& ys = members[static_cast<std::size_t>(k)];
    if (ys.empty()) continue;
    std::sort(ys.begin(), ys.end());
    double s = 0.0;
    for (double y : ys) s += y;
    z(k) = s / static_cast<double>(ys.size());
  }
  return z;
}

MetaBank::MetaBank(const MetaConfig& cfg, Rng& rng) : config(cfg), rp(cfg.rp) {
  if (cfg.num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
  if (cfg.expert_steps < 0) throw std::invalid_argument("expert_steps must be >= 0");
  if (!(cfg.adapt_lr > 0.0)) throw std::invalid_argument("adapt_lr must be > 0");
  cfg.rp.validate();
  selector = NetD(sizes_of(cfg.bins, cfg.selector_hidden, cfg.num_experts), cfg.activation, Head::Softmax, rng);
  selector_opt = AdamD(selector, cfg.selector_adam);
  for (int m = 0; m < cfg.num_experts; ++m) {
    experts.emplace_back(sizes_of(1, cfg.expert_hidden, 2), cfg.activation, Head::Gaussian, rng);
    expert_opt.emplace_back(experts.back(), cfg.expert_adam);
    priors.push_back({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)});
  }
  prior_m = Simplex::uniform(cfg.num_experts);
}

Eigen::VectorXd MetaBank::embed(const tasks::RegressionSplit& split) const {
  return embed_regression(split, config.bins, config.range);
}

Simplex MetaBank::selector_posterior(const tasks::RegressionSplit& train) const {
  TapeD tape;
  return softmax_simplex(selector.forward(embed(train), tape));
}

int MetaBank::select(const tasks::RegressionSplit& train) const {
  Eigen::Index best;
  selector_posterior(train).probs().maxCoeff(&best);
  return static_cast<int>(best);
}

double expert_free_energy(const MetaBank& bank, int m, const tasks::RegressionSplit& split) {
  if (m < 0 || m >= bank.num_experts()) throw std::out_of_range("expert index out of range");
  if (split.size() < 1) throw std::invalid_argument("expert_free_energy: empty split");
  TapeD tape;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < split.size(); ++i)
    loss += expert_point_loss(bank.experts[m], bank.priors[m], split.x(i), split.y(i), bank.config.huber_delta,
                              1.0 / bank.rp.beta2, tape, nullptr);
  return -loss / static_cast<double>(split.size());
}

double mse(const NetD& expert, const tasks::RegressionSplit& split) {
  if (split.size() < 1) throw std::invalid_argument("mse: empty split");
  TapeD tape;
  double s = 0.0;
  for (Eigen::Index i = 0; i < split.size(); ++i) {
    const double r = expert.forward(Eigen::VectorXd::Constant(1, split.x(i)), tape)(0) - split.y(i);
    s += r * r;
  }
  return s / static_cast<double>(split.size());
}

MetaMetrics meta_train_episode(MetaBank& bank, const std::vector<TaskDataset>& batch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("meta_train_episode: empty batch");
  const int M = bank.num_experts();
  const double inv_b1 = 1.0 / bank.rp.beta1;
  const double inv_b2 = 1.0 / bank.rp.beta2;
  const double delta = bank.config.huber_delta;

  MetaMetrics out;
  out.usage = Eigen::VectorXd::Zero(M);
  ParamSetD sel_grad = bank.selector.zeros_like();
  std::vector<std::vector<const TaskDataset*>> assigned(static_cast<std::size_t>(M));
  TapeD tape;

  for (const TaskDataset& td : batch) {
    const Eigen::VectorXd z = bank.embed(td.train);
    const Eigen::VectorXd p_sel = softmax(bank.selector.forward(z, tape));
    const Simplex sel{p_sel / p_sel.sum()};
    const int m = static_cast<int>(sample(sel, rng));
    const Simplex q_m = bank.prior_m.floored();

    const double f = expert_free_energy(bank, m, td.val);
    if (!bank.baseline_init) {
      bank.baseline = f;
      bank.baseline_init = true;
    }
    const double score = (f - bank.baseline) - inv_b1 * (std::log(std::max(p_sel(m), kProbFloor)) - std::log(q_m[m]));
    Eigen::VectorXd g = score * p_sel;
    g(m) -= score;
    bank.selector.backward(tape, g, sel_grad);

    bank.baseline = bank.config.baseline_decay * bank.baseline + (1.0 - bank.config.baseline_decay) * f;
    out.rate_xm += kl(sel, q_m);
    bank.prior_m = ema_update(bank.prior_m, sel, bank.rp.lambda2);

    out.free_energy += f;
    out.val_mse += mse(bank.experts[m], td.val);
    out.usage(m) += 1.0;
    assigned[static_cast<std::size_t>(m)].push_back(&td);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  scale(sel_grad, inv_n);
  bank.selector_opt.step(bank.selector, sel_grad);

  for (int m = 0; m < M; ++m) {
    const auto& mine = assigned[static_cast<std::size_t>(m)];
    if (mine.empty()) continue;
    NetD& expert = bank.experts[m];
    auto& prior = bank.priors[m];
    for (int s = 0; s < bank.config.expert_steps; ++s) {
      ParamSetD grads = expert.zeros_like();
      double count = 0.0;
      for (const TaskDataset* td : mine)
        for (Eigen::Index i = 0; i < td->train.size(); ++i) {
          expert_point_loss(expert, prior, td->train.x(i), td->train.y(i), delta, inv_b2, tape, &grads);
          count += 1.0;
        }
      scale(grads, 1.0 / count);
      bank.expert_opt[m].step(expert, grads);
    }
    // EMA of the head's moments at the assigned training inputs.
    const double l1 = bank.rp.lambda1;
    for (const TaskDataset* td : mine)
      for (Eigen::Index i = 0; i < td->train.size(); ++i) {
        const GaussianParams g = gaussian_head(expert.forward(Eigen::VectorXd::Constant(1, td->train.x(i)), tape));
        prior.mean = l1 * prior.mean + (1.0 - l1) * g.mean;
        prior.var = l1 * prior.var + (1.0 - l1) * (2.0 * g.log_std).array().exp().matrix();
      }
  }

  out.free_energy *= inv_n;
  out.val_mse *= inv_n;
  out.rate_xm *= inv_n;
  out.usage *= inv_n;
  return out;
}

Adaptation adapt_and_evaluate(const MetaBank& bank, const TaskDataset& task, int grad_steps) {
  if (grad_steps < 0) throw std::invalid_argument("adapt_and_evaluate: grad_steps must be >= 0");
  Adaptation out;
  out.expert = bank.select(task.train);
  NetD expert = bank.experts[out.expert];
  out.pre_mse = mse(expert, task.val);
  TapeD tape;
  const double n = static_cast<double>(task.train.size());
  for (int s = 0; s < grad_steps; ++s) {
    ParamSetD grads = expert.zeros_like();
    for (Eigen::Index i = 0; i < task.train.size(); ++i)
      expert_point_loss(expert, bank.priors[out.expert], task.train.x(i), task.train.y(i), bank.config.huber_delta,
                        0.0, tape, &grads);
    auto& layers = expert.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].W -= (bank.config.adapt_lr / n) * grads[l].W;
      layers[l].b -= (bank.config.adapt_lr / n) * grads[l].b;
    }
  }
  out.post_mse = mse(expert, task.val);
  return out;
}

MetaEvaluation evaluate(const MetaBank& bank, int num_tasks, int K, int grad_steps, Rng& rng) {
  if (num_tasks < 1) throw std::invalid_argument("evaluate: num_tasks must be >= 1");
  MetaEvaluation ev;
  const int M = bank.num_experts();
  std::vector<Eigen::VectorXd> posts;
  Eigen::VectorXd marginal = Eigen::VectorXd::Zero(M);
  for (int t = 0; t < num_tasks; ++t) {
    const TaskDataset td = sample_task(K, bank.config.range, rng);
    const Adaptation a = adapt_and_evaluate(bank, td, grad_steps);
    ev.pre_mse += a.pre_mse;
    ev.post_mse += a.post_mse;
    if (a.post_mse <= a.pre_mse) ev.improved_fraction += 1.0;
    posts.push_back(bank.selector_posterior(td.train).probs());
    marginal += posts.back();
    ev.confidence += posts.back().maxCoeff();
  }
  const double n = static_cast<double>(num_tasks);
  marginal /= n;
  const Simplex q{marginal};
  for (const auto& p : posts) ev.rate_xm += kl(Simplex{p}, q);
  ev.pre_mse /= n;
  ev.post_mse /= n;
  ev.improved_fraction /= n;
  ev.rate_xm /= n;
  ev.confidence /= n;
  return ev;
}

std::vector<PartitionCell> partition_map(const MetaBank& bank, int a_points, int b_points, int K, Rng& rng) {
  if (a_points < 1 || b_points < 1) throw std::invalid_argument("partition_map: empty grid");
  std::vector<PartitionCell> cells;
  for (int i = 0; i < a_points; ++i)
    for (int j = 0; j < b_points; ++j) {
      tasks::SineTask t;
      t.a = a_points == 1 ? 2.55 : 0.1 + 4.9 * i / (a_points - 1);
      t.b = b_points == 1 ? std::numbers::pi : 2.0 * std::numbers::pi * j / (b_points - 1);
      const TaskDataset td = make_task(t, K, bank.config.range, rng);
      const Simplex p = bank.selector_posterior(td.train);
      Eigen::Index best;
      p.probs().maxCoeff(&best);
      cells.push_back({t.a, t.b, static_cast<int>(best), p.probs()});
    }
  return cells;
}

double mean_confidence(const std::vector<PartitionCell>& cells) {
  if (cells.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cells) s += c.probs.maxCoeff();
  return s / static_cast<double>(cells.size());
}

void write_partition_csv(std::ostream& os, const std::vector<PartitionCell>& cells) {
  const Eigen::Index M = cells.empty() ? 0 : cells.front().probs.size();
  os << "a,b,expert";
  for (Eigen::Index m = 0; m < M; ++m) os << ",p_" << m;
  os << '\n';
  for (const auto& c : cells) {
    os << fmt_num(c.a) << ',' << fmt_num(c.b) << ',' << c.expert;
    for (Eigen::Index m = 0; m < M; ++m) os << ',' << fmt_num(c.probs(m));
    os << '\n';
  }
}

}  // namespace hexpert::meta
