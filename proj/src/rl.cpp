#include "hexpert/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "hexpert/csv.hpp"

namespace hexpert::rl {

namespace {

std::vector<int> sizes_of(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

double value_of(const NetD& critic, const Eigen::VectorXd& x, TapeD& tape) { return critic.forward(x, tape)(0); }

}  // namespace

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

Eigen::VectorXd discounted_sum(const Eigen::VectorXd& signal, double gamma, bool terminal, double bootstrap) {
  const Eigen::Index n = signal.size();
  Eigen::VectorXd out(n);
  double next = terminal ? 0.0 : bootstrap;
  for (Eigen::Index t = n; t-- > 0;) {
    next = signal(t) + gamma * next;
    out(t) = next;
  }
  return out;
}

Eigen::VectorXd discounted_returns(const Trajectory& traj, double gamma, double bootstrap) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(traj.size()));
  for (std::size_t t = 0; t < traj.size(); ++t) r(static_cast<Eigen::Index>(t)) = traj.steps[t].reward;
  return discounted_sum(r, gamma, traj.terminal(), bootstrap);
}

FreeEnergies step_free_energies(const Trajectory& traj, const ResourceParams& rp) {
  const auto n = static_cast<Eigen::Index>(traj.size());
  FreeEnergies fe{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index t = 0; t < n; ++t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    fe.f(t) = s.reward - (s.log_p_action - s.log_prior_action) / rp.beta2;
    fe.fbar(t) = fe.f(t) - (s.log_p_expert - s.log_prior_expert) / rp.beta1;
  }
  return fe;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> discounted_free_energy(const Trajectory& traj, const ResourceParams& rp,
                                                                   double bootstrap, double bootstrap_bar) {
  const FreeEnergies fe = step_free_energies(traj, rp);
  return {discounted_sum(fe.f, rp.gamma, traj.terminal(), bootstrap),
          discounted_sum(fe.fbar, rp.gamma, traj.terminal(), bootstrap_bar)};
}

Eigen::VectorXd advantage(const Eigen::VectorXd& f, const Eigen::VectorXd& v, const Eigen::VectorXd& v_next,
                          double gamma, bool terminal) {
  require_same_dim(f.size(), v.size(), "advantage values");
  require_same_dim(f.size(), v_next.size(), "advantage next values");
  Eigen::VectorXd a = f + gamma * v_next - v;
  if (terminal && a.size() > 0) a(a.size() - 1) = f(a.size() - 1) - v(a.size() - 1);
  return a;
}

RLBank::RLBank(const RLConfig& cfg, Rng& rng) : config(cfg), rp(cfg.rp) {
  rp.validate();
  if (cfg.num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
  if (cfg.state_dim < 1 || cfg.action_dim < 1) throw std::invalid_argument("state and action sizes must be >= 1");
  selector_actor = NetD(sizes_of(cfg.state_dim, cfg.selector_hidden, cfg.num_experts), cfg.activation, Head::Softmax, rng);
  selector_critic = NetD(sizes_of(cfg.state_dim, cfg.critic_hidden, 1), cfg.activation, Head::Identity, rng);
  sel_actor_opt = AdamD(selector_actor, cfg.actor_adam);
  sel_critic_opt = AdamD(selector_critic, cfg.critic_adam);
  for (int m = 0; m < cfg.num_experts; ++m) {
    expert_actors.emplace_back(sizes_of(cfg.state_dim, cfg.expert_hidden, 2 * cfg.action_dim), cfg.activation,
                               Head::Gaussian, rng);
    expert_critics.emplace_back(sizes_of(cfg.state_dim, cfg.critic_hidden, 1), cfg.activation, Head::Identity, rng);
    actor_opt.emplace_back(expert_actors.back(), cfg.actor_adam);
    critic_opt.emplace_back(expert_critics.back(), cfg.critic_adam);
    action_priors.push_back({Eigen::VectorXd::Zero(cfg.action_dim), Eigen::VectorXd::Ones(cfg.action_dim)});
  }
  prior_m = Simplex::uniform(cfg.num_experts);
}

Simplex RLBank::selector_posterior(const Eigen::VectorXd& x) const {
  TapeD tape;
  return softmax_simplex(selector_actor.forward(x, tape));
}

GaussianParams RLBank::expert_policy(int m, const Eigen::VectorXd& x) const {
  if (m < 0 || m >= num_experts()) throw std::out_of_range("expert index out of range");
  TapeD tape;
  return gaussian_head(expert_actors[m].forward(x, tape));
}

Trajectory collect_rollout(tasks::CartPole& env, const RLBank& bank, Rng& rng, int max_steps, Mode mode,
                           int force_expert) {
  if (max_steps < 1) throw std::invalid_argument("collect_rollout: max_steps must be >= 1");
  if (force_expert >= bank.num_experts()) throw std::out_of_range("collect_rollout: forced expert out of range");
  Trajectory traj;
  Eigen::VectorXd x = env.reset(rng).vec();
  TapeD tape;
  const Simplex q_m = bank.prior_m.floored();
  for (int t = 0; t < max_steps; ++t) {
    Step s;
    s.state = x;
    const Simplex sel = softmax_simplex(bank.selector_actor.forward(x, tape));
    int m;
    if (force_expert >= 0) {
      m = force_expert;
    } else if (mode == Mode::Greedy) {
      Eigen::Index best;
      sel.probs().maxCoeff(&best);
      m = static_cast<int>(best);
    } else {
      m = static_cast<int>(sample(sel, rng));
    }
    s.expert = m;
    s.log_p_expert = std::log(std::max(sel[m], kProbFloor));
    s.log_prior_expert = std::log(q_m[m]);

    const GaussianParams pol = gaussian_head(bank.expert_actors[m].forward(x, tape));
    s.action = mode == Mode::Greedy ? pol.mean : gaussian_sample(pol, rng);
    s.log_p_action = gaussian_log_prob(pol, s.action);
    const auto& pr = bank.action_priors[m];
    s.log_prior_action = gaussian_log_prob({pr.mean, pr.log_std()}, s.action);

    const tasks::CartPoleStep r = env.step(s.action(0));
    s.reward = r.reward;
    s.next_state = r.next.vec();
    s.done = r.done;
    s.truncated = r.truncated;
    traj.steps.push_back(std::move(s));
    x = r.next.vec();
    if (r.done) break;
  }
  return traj;
}

void annotate(Trajectory& traj, const RLBank& bank) {
  const auto n = static_cast<Eigen::Index>(traj.size());
  TapeD tape;
  Eigen::VectorXd v(n), v_next(n), vb(n), vb_next(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    v(t) = value_of(bank.expert_critics[s.expert], s.state, tape);
    v_next(t) = value_of(bank.expert_critics[s.expert], s.next_state, tape);
    vb(t) = value_of(bank.selector_critic, s.state, tape);
    vb_next(t) = value_of(bank.selector_critic, s.next_state, tape);
  }
  const bool terminal = traj.terminal();
  const double gamma = bank.rp.gamma;
  traj.R = discounted_returns(traj, gamma, n > 0 ? v_next(n - 1) : 0.0);
  std::tie(traj.F, traj.Fbar) =
      discounted_free_energy(traj, bank.rp, n > 0 ? v_next(n - 1) : 0.0, n > 0 ? vb_next(n - 1) : 0.0);
  const FreeEnergies fe = step_free_energies(traj, bank.rp);
  traj.A = advantage(fe.f, v, v_next, gamma, terminal);
  traj.Abar = advantage(fe.fbar, vb, vb_next, gamma, terminal);
}

RLMetrics rl_train_iteration(RLBank& bank, tasks::CartPole& env, int batch_size, int max_steps, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("rl_train_iteration: batch_size must be >= 1");
  const int M = bank.num_experts();
  std::vector<Trajectory> batch;
  RLMetrics out;
  for (int b = 0; b < batch_size; ++b) {
    batch.push_back(collect_rollout(env, bank, rng, max_steps, Mode::Sample));
    annotate(batch.back(), bank);
    out.mean_reward += batch.back().total_reward();
    out.mean_length += static_cast<double>(batch.back().size());
  }
  out.mean_reward /= batch_size;
  out.mean_length /= batch_size;

  struct Ref {
    const Step* step;
    double A, Abar, F, Fbar;
  };
  std::vector<Ref> items;
  for (const auto& tr : batch)
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const auto i = static_cast<Eigen::Index>(t);
      items.push_back({&tr.steps[t], tr.A(i), tr.Abar(i), tr.F(i), tr.Fbar(i)});
    }
  const std::size_t total = items.size();
  if (bank.config.normalize_advantage && total > 1) {
    auto standardize = [&](double Ref::*field) {
      double mean = 0.0, sq = 0.0;
      for (const auto& r : items) mean += r.*field;
      mean /= static_cast<double>(total);
      for (const auto& r : items) sq += (r.*field - mean) * (r.*field - mean);
      const double sd = std::sqrt(sq / static_cast<double>(total)) + 1e-8;
      for (auto& r : items) r.*field = (r.*field - mean) / sd;
    };
    standardize(&Ref::A);
  }
  const std::size_t parts = static_cast<std::size_t>(std::max(1, bank.config.minibatches));
  const std::size_t chunk = std::max<std::size_t>(1, (total + parts - 1) / parts);

  TapeD tape;
  ParamSetD g_sa = bank.selector_actor.zeros_like();
  ParamSetD g_sc = bank.selector_critic.zeros_like();
  std::vector<ParamSetD> g_a, g_c;
  for (int m = 0; m < M; ++m) {
    g_a.push_back(bank.expert_actors[m].zeros_like());
    g_c.push_back(bank.expert_critics[m].zeros_like());
  }
  std::vector<int> counts(static_cast<std::size_t>(M));
  const double delta = bank.config.huber_delta;
  double rate_sum = 0.0, kl_sum = 0.0, closs = 0.0, sloss = 0.0;

  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t stop = std::min(total, start + chunk);
    const double inv = 1.0 / static_cast<double>(stop - start);
    set_zero(g_sc);
    for (int m = 0; m < M; ++m) {
      set_zero(g_a[m]);
      set_zero(g_c[m]);
    }
    std::fill(counts.begin(), counts.end(), 0);

    for (std::size_t k = start; k < stop; ++k) {
      const Ref& it = items[k];
      const Step& s = *it.step;
      const int m = s.expert;

      // Selector actor: ascend Abar * ln p(m|x).
      const Eigen::VectorXd p_sel = softmax(bank.selector_actor.forward(s.state, tape));
      Eigen::VectorXd g = it.Abar * p_sel;
      g(m) -= it.Abar;
      bank.selector_actor.backward(tape, g, g_sa);
      const Simplex sel{p_sel / p_sel.sum()};
      rate_sum += kl_floored(sel, bank.prior_m);
      bank.prior_m = ema_update(bank.prior_m, sel, bank.rp.lambda2);

      // Selector critic: Huber regression on Fbar.
      const double vb = value_of(bank.selector_critic, s.state, tape);
      sloss += huber(vb - it.Fbar, delta);
      bank.selector_critic.backward(tape, Eigen::VectorXd::Constant(1, huber_grad(vb - it.Fbar, delta)), g_sc);

      // Expert actor: ascend A * ln p(a|x,m).
      const Eigen::VectorXd& raw = bank.expert_actors[m].forward(s.state, tape);
      const GaussianParams pol = gaussian_head(raw);
      Eigen::VectorXd gm, gs;
      gaussian_log_prob_grad(pol, s.action, gm, gs);
      bank.expert_actors[m].backward(tape, gaussian_head_backward(raw, Eigen::VectorXd(-it.A * gm), Eigen::VectorXd(-it.A * gs)),
                                     g_a[m]);
      auto& pr = bank.action_priors[m];
      kl_sum += gaussian_kl(pol.mean, pol.log_std, pr.mean, pr.log_std());
      const double l1 = bank.rp.lambda1;
      pr.mean = l1 * pr.mean + (1.0 - l1) * pol.mean;
      pr.var = l1 * pr.var + (1.0 - l1) * (2.0 * pol.log_std).array().exp().matrix();

      // Expert critic: Huber regression on F.
      const double v = value_of(bank.expert_critics[m], s.state, tape);
      closs += huber(v - it.F, delta);
      bank.expert_critics[m].backward(tape, Eigen::VectorXd::Constant(1, huber_grad(v - it.F, delta)), g_c[m]);
      ++counts[static_cast<std::size_t>(m)];
    }

    scale(g_sc, inv);
    bank.sel_critic_opt.step(bank.selector_critic, g_sc);
    for (int m = 0; m < M; ++m) {
      if (counts[static_cast<std::size_t>(m)] == 0) continue;
      scale(g_a[m], inv);
      scale(g_c[m], inv);
      bank.actor_opt[m].step(bank.expert_actors[m], g_a[m]);
      bank.critic_opt[m].step(bank.expert_critics[m], g_c[m]);
    }
  }

  // The selector takes a single step on the whole batch, so it moves slower
  // than the experts it routes between.
  scale(g_sa, 1.0 / static_cast<double>(std::max<std::size_t>(1, total)));
  bank.sel_actor_opt.step(bank.selector_actor, g_sa);

  // Extra critic-only regression passes on the same targets.
  for (int epoch = 1; epoch < bank.config.critic_epochs; ++epoch) {
    for (std::size_t start = 0; start < total; start += chunk) {
      const std::size_t stop = std::min(total, start + chunk);
      const double inv = 1.0 / static_cast<double>(stop - start);
      set_zero(g_sc);
      for (int m = 0; m < M; ++m) set_zero(g_c[m]);
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t k = start; k < stop; ++k) {
        const Ref& it = items[k];
        const Step& s = *it.step;
        const double vb = value_of(bank.selector_critic, s.state, tape);
        bank.selector_critic.backward(tape, Eigen::VectorXd::Constant(1, huber_grad(vb - it.Fbar, delta)), g_sc);
        const double v = value_of(bank.expert_critics[s.expert], s.state, tape);
        bank.expert_critics[s.expert].backward(tape, Eigen::VectorXd::Constant(1, huber_grad(v - it.F, delta)),
                                               g_c[s.expert]);
        ++counts[static_cast<std::size_t>(s.expert)];
      }
      scale(g_sc, inv);
      bank.sel_critic_opt.step(bank.selector_critic, g_sc);
      for (int m = 0; m < M; ++m) {
        if (counts[static_cast<std::size_t>(m)] == 0) continue;
        scale(g_c[m], inv);
        bank.critic_opt[m].step(bank.expert_critics[m], g_c[m]);
      }
    }
  }

  const double n = std::max<double>(1.0, static_cast<double>(total));
  out.rate_xm = rate_sum / n;
  out.expert_kl = kl_sum / n;
  out.critic_loss = closs / n;
  out.selector_critic_loss = sloss / n;
  out.prior_m = bank.prior_m.probs();
  return out;
}

EvalResult evaluate_policy(tasks::CartPole& env, const RLBank& bank, int episodes, int max_steps, Rng& rng,
                           Mode mode) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be >= 1");
  EvalResult res;
  res.expert_share = Eigen::VectorXd::Zero(bank.num_experts());
  double visited = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const Trajectory tr = collect_rollout(env, bank, rng, max_steps, mode);
    res.lengths.push_back(static_cast<int>(tr.size()));
    for (const auto& s : tr.steps) {
      Eigen::Index best;
      bank.selector_posterior(s.state).probs().maxCoeff(&best);
      res.expert_share(best) += 1.0;
      visited += 1.0;
    }
  }
  res.mean_length = std::accumulate(res.lengths.begin(), res.lengths.end(), 0.0) / episodes;
  res.expert_share /= visited;
  return res;
}

void write_partition_csv(std::ostream& os, tasks::CartPole& env, const RLBank& bank, int episodes, int max_steps,
                         Rng& rng) {
  const int M = bank.num_experts();
  os << "x,x_dot,theta,theta_dot,expert";
  for (int m = 0; m < M; ++m) os << ",p_" << m;
  os << '\n';
  for (int e = 0; e < episodes; ++e) {
    const Trajectory tr = collect_rollout(env, bank, rng, max_steps, Mode::Greedy);
    for (const auto& s : tr.steps) {
      const Simplex sel = bank.selector_posterior(s.state);
      Eigen::Index best;
      sel.probs().maxCoeff(&best);
      for (Eigen::Index j = 0; j < s.state.size(); ++j) os << fmt_num(s.state(j)) << ',';
      os << best;
      for (int m = 0; m < M; ++m) os << ',' << fmt_num(sel[m]);
      os << '\n';
    }
  }
}

}  // namespace hexpert::rl
