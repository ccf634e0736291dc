#include "hexpert/runner.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "hexpert/csv.hpp"
#include "hexpert/serialize.hpp"

namespace hexpert::runner {

namespace {

// Independent oracle starts per tabular problem; the best objective is the
// reference the learner is compared against.
constexpr int kOracleRestarts = 5;

Rng stream(const Config& cfg, std::string_view purpose, std::uint64_t index = 0) {
  return Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).derive(purpose, index);
}

AdamConfig adam(double lr) {
  AdamConfig a;
  a.lr = lr;
  return a;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << content;
    if (!out) throw RuntimeFailure("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Fn>
void write_csv(const std::filesystem::path& path, Fn&& body) {
  std::ostringstream os;
  body(os);
  write_file(path, os.str());
}

std::string join_header(const std::string& prefix, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? "," : "") + prefix + std::to_string(i);
  return s;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << fmt_num(v(i));
}

}  // namespace

ResourceParams resource_params(const Config& cfg) {
  ResourceParams rp;
  rp.beta1 = cfg.get_double("rp.beta1");
  rp.beta2 = cfg.get_double("rp.beta2");
  if (cfg.kind() != config::Kind::Oracle) {
    rp.lambda1 = cfg.get_double("rp.lambda1");
    rp.lambda2 = cfg.get_double("rp.lambda2");
  }
  if (cfg.kind() == config::Kind::RL) rp.gamma = cfg.get_double("rp.gamma");
  return rp;
}

supervised::BankConfig classifier_config(const Config& cfg, int input_dim, int num_classes) {
  supervised::BankConfig b;
  b.task = supervised::Task::Classification;
  b.input_dim = input_dim;
  b.num_outputs = num_classes;
  b.num_experts = static_cast<int>(cfg.get_int("model.experts"));
  b.selector_hidden = cfg.get_ints("model.selector_hidden");
  b.expert_hidden = cfg.get_ints("model.expert_hidden");
  b.rp = resource_params(cfg);
  b.selector_adam = adam(cfg.get_double("train.selector_lr"));
  b.expert_adam = adam(cfg.get_double("train.expert_lr"));
  return b;
}

density::DensityConfig density_config(const Config& cfg) {
  density::DensityConfig d;
  d.num_experts = static_cast<int>(cfg.get_int("model.experts"));
  d.selector_hidden = cfg.get_ints("model.selector_hidden");
  d.lambda = cfg.get_double("density.lambda");
  d.prior_lambda = cfg.get_double("density.prior_lambda");
  d.nu = cfg.get_double("density.nu");
  d.init_at_data = cfg.get_bool("density.init_at_data");
  d.rp = resource_params(cfg);
  d.selector_adam = adam(cfg.get_double("train.selector_lr"));
  d.expert_adam = adam(cfg.get_double("train.expert_lr"));
  return d;
}

rl::RLConfig rl_config(const Config& cfg) {
  rl::RLConfig r;
  r.num_experts = static_cast<int>(cfg.get_int("model.experts"));
  r.selector_hidden = cfg.get_ints("model.selector_hidden");
  r.expert_hidden = cfg.get_ints("model.expert_hidden");
  r.critic_hidden = cfg.get_ints("rl.critic_hidden");
  r.rp = resource_params(cfg);
  r.actor_adam = adam(cfg.get_double("train.expert_lr"));
  r.critic_adam = adam(cfg.get_double("train.critic_lr"));
  r.huber_delta = cfg.get_double("rl.huber_delta");
  r.minibatches = static_cast<int>(cfg.get_int("rl.minibatches"));
  r.critic_epochs = static_cast<int>(cfg.get_int("rl.critic_epochs"));
  return r;
}

meta::MetaConfig meta_config(const Config& cfg) {
  meta::MetaConfig m;
  m.num_experts = static_cast<int>(cfg.get_int("model.experts"));
  m.bins = static_cast<int>(cfg.get_int("meta.bins"));
  m.range = {cfg.get_double("meta.x_lo"), cfg.get_double("meta.x_hi")};
  m.selector_hidden = cfg.get_ints("model.selector_hidden");
  m.expert_hidden = cfg.get_ints("model.expert_hidden");
  m.rp = resource_params(cfg);
  m.selector_adam = adam(cfg.get_double("train.selector_lr"));
  m.expert_adam = adam(cfg.get_double("train.expert_lr"));
  m.huber_delta = cfg.get_double("meta.huber_delta");
  m.adapt_lr = cfg.get_double("meta.adapt_lr");
  return m;
}

std::vector<Eigen::VectorXd> mixture_means(const Config& cfg) {
  const Eigen::MatrixXd m = cfg.get_matrix("data.means");
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(m.row(r).transpose());
  return out;
}

// ---------------------------------------------------------------- oracle

oracle::TabularProblem oracle_problem(const Config& cfg) {
  const Eigen::MatrixXd u = cfg.get_matrix("oracle.utility");
  const int M = static_cast<int>(cfg.get_int("model.experts"));
  if (u.size() == 0) {
    Rng rng = stream(cfg, "problem");
    return oracle::random_problem(cfg.get_int("oracle.states"), cfg.get_int("oracle.actions"), M, rng);
  }
  oracle::TabularProblem p;
  const auto px = cfg.get_doubles("oracle.px");
  p.px = px.empty() ? Simplex::uniform(u.rows())
                    : Simplex(Eigen::Map<const Eigen::VectorXd>(px.data(), static_cast<Eigen::Index>(px.size())));
  p.utility = u;
  p.num_experts = M;
  p.validate();
  return p;
}

oracle::SolveResult run_oracle(const Config& cfg) {
  const oracle::TabularProblem prob = oracle_problem(cfg);
  oracle::SolveOptions opts;
  opts.tol = cfg.get_double("oracle.tol");
  opts.max_sweeps = static_cast<int>(cfg.get_int("oracle.max_sweeps"));
  Rng rng = stream(cfg, "oracle");
  return oracle::solve(prob, resource_params(cfg), opts, rng);
}

// ------------------------------------------------------- classification

tasks::LabeledDataset classification_data(const Config& cfg) {
  return tasks::make_classification(cfg.get_string("data.name"), cfg.get_int("data.n"), cfg.get_double("data.noise"),
                                    stream(cfg, "data").next_u64());
}

FoldOutcome train_fold(const Config& cfg, const tasks::LabeledDataset& data, int fold, const TraceSink& sink) {
  const int folds = static_cast<int>(cfg.get_int("data.folds"));
  const tasks::FoldSplit split = tasks::kfold_split(data, folds, fold, stream(cfg, "folds").next_u64());
  Rng rng = stream(cfg, "bank", static_cast<std::uint64_t>(fold));
  supervised::ExpertBank bank(classifier_config(cfg, static_cast<int>(data.dim()), data.num_classes), rng);
  const supervised::Batch train = supervised::to_batch(split.train);
  const supervised::Batch test = supervised::to_batch(split.test);
  const long steps = cfg.get_int("train.steps");
  const long batch = cfg.get_int("train.batch");
  const long every = cfg.get_int("train.log_every");
  for (long t = 0; t < steps; ++t) {
    const supervised::StepMetrics m = supervised::train_step(bank, supervised::sample_batch(train, batch, rng), rng);
    if (sink.on_step && (t % every == 0 || t == steps - 1)) sink.on_step(static_cast<int>(t), m);
  }
  return {supervised::evaluate(bank, test), supervised::evaluate(bank, train), std::move(bank)};
}

oracle::TabularProblem tabular_problem(const Config& cfg, int problem_index) {
  Rng rng = stream(cfg, "problem", static_cast<std::uint64_t>(problem_index));
  return oracle::random_problem(cfg.get_int("data.states"), cfg.get_int("data.actions"),
                                static_cast<int>(cfg.get_int("model.experts")), rng);
}

TabularOutcome train_tabular(const Config& cfg, int problem_index, const TraceSink& sink) {
  return train_tabular(cfg, tabular_problem(cfg, problem_index), problem_index, sink);
}

TabularOutcome train_tabular(const Config& cfg, const oracle::TabularProblem& problem, int problem_index,
                             const TraceSink& sink) {
  const ResourceParams rp = resource_params(cfg);
  TabularOutcome out;
  out.problem = problem;
  oracle::SolveOptions opts;
  opts.tol = 1e-10;
  opts.max_sweeps = 100000;
  for (int r = 0; r < kOracleRestarts; ++r) {
    Rng rng = stream(cfg, "oracle", static_cast<std::uint64_t>(problem_index * kOracleRestarts + r));
    oracle::SolveResult s = oracle::solve(out.problem, rp, opts, rng);
    if (r == 0 || s.solution.objective > out.oracle.solution.objective) out.oracle = std::move(s);
  }

  supervised::BankConfig bc;
  bc.task = supervised::Task::Tabular;
  bc.input_dim = static_cast<int>(out.problem.num_states());
  bc.num_outputs = static_cast<int>(out.problem.num_actions());
  bc.num_experts = out.problem.num_experts;
  bc.selector_hidden = {};
  bc.expert_hidden = {};
  bc.rp = rp;
  bc.selector_adam = adam(cfg.get_double("train.selector_lr"));
  bc.expert_adam = adam(cfg.get_double("train.expert_lr"));
  Rng rng = stream(cfg, "bank", static_cast<std::uint64_t>(problem_index));
  supervised::ExpertBank bank(bc, rng);
  const long steps = cfg.get_int("train.steps");
  const long batch = cfg.get_int("train.batch");
  const long every = cfg.get_int("train.log_every");
  for (long t = 0; t < steps; ++t) {
    const auto m = supervised::train_step(bank, supervised::sample_tabular_batch(out.problem, batch, rng), rng);
    if (sink.on_step && (t % every == 0 || t == steps - 1)) sink.on_step(static_cast<int>(t), m);
  }
  out.learned = supervised::extract_tables(bank, out.problem, rp);
  const double ref = out.oracle.solution.objective;
  out.relative_gap = std::abs(out.learned.objective - ref) / std::max(std::abs(ref), 1e-12);
  return out;
}

// -------------------------------------------------------------- density

DensityOutcome train_density(const Config& cfg,
                             const std::function<void(int, const density::DensityStepMetrics&)>& on_step) {
  DensityOutcome out;
  out.data = tasks::sample_mixture(mixture_means(cfg), cfg.get_double("data.cov"), cfg.get_int("data.n"),
                                   stream(cfg, "data").next_u64());
  Rng rng = stream(cfg, "bank");
  out.bank = density::make_density_bank(out.data, density_config(cfg), rng);
  const long steps = cfg.get_int("train.steps");
  const Eigen::Index batch = cfg.get_int("train.batch");
  const long every = cfg.get_int("train.log_every");
  Eigen::MatrixXd b(batch, out.data.cols());
  for (long t = 0; t < steps; ++t) {
    for (Eigen::Index i = 0; i < batch; ++i) b.row(i) = out.data.row(static_cast<Eigen::Index>(rng.below(out.data.rows())));
    const auto m = density::density_train_step(out.bank, b, rng);
    if (on_step && (t % every == 0 || t == steps - 1)) on_step(static_cast<int>(t), m);
  }
  return out;
}

Eigen::VectorXd nearest_mean_distance(const density::DensityBank& bank, const std::vector<Eigen::VectorXd>& means) {
  Eigen::VectorXd d(bank.num_experts());
  for (int m = 0; m < bank.num_experts(); ++m) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& mu : means) best = std::min(best, (bank.posteriors[m].omega - mu).norm());
    d(m) = best;
  }
  return d;
}

// ------------------------------------------------------------------- rl

rl::RLBank train_rl(const Config& cfg, const std::function<void(int, const rl::RLMetrics&)>& on_iter) {
  Rng rng = stream(cfg, "bank");
  rl::RLBank bank(rl_config(cfg), rng);
  tasks::CartPoleParams params;
  params.max_steps = static_cast<int>(cfg.get_int("rl.max_steps"));
  tasks::CartPole env(params);
  const long iters = cfg.get_int("train.steps");
  const int batch = static_cast<int>(cfg.get_int("train.batch"));
  const long every = cfg.get_int("train.log_every");
  for (long it = 0; it < iters; ++it) {
    const auto m = rl::rl_train_iteration(bank, env, batch, params.max_steps, rng);
    if (on_iter && (it % every == 0 || it == iters - 1)) on_iter(static_cast<int>(it), m);
  }
  return bank;
}

rl::EvalResult evaluate_rl(const Config& cfg, const rl::RLBank& bank) {
  tasks::CartPoleParams params;
  params.max_steps = static_cast<int>(cfg.get_int("rl.max_steps"));
  tasks::CartPole env(params);
  Rng rng = stream(cfg, "eval");
  return rl::evaluate_policy(env, bank, static_cast<int>(cfg.get_int("rl.eval_episodes")), params.max_steps, rng,
                             rl::Mode::Greedy);
}

// ----------------------------------------------------------------- meta

meta::MetaBank train_meta(const Config& cfg, const std::function<void(int, const meta::MetaMetrics&)>& on_episode) {
  Rng rng = stream(cfg, "bank");
  meta::MetaBank bank(meta_config(cfg), rng);
  const long episodes = cfg.get_int("train.steps");
  const int batch = static_cast<int>(cfg.get_int("train.batch"));
  const int K = static_cast<int>(cfg.get_int("meta.k"));
  const long every = cfg.get_int("train.log_every");
  std::vector<meta::TaskDataset> tasks_;
  for (long e = 0; e < episodes; ++e) {
    tasks_.clear();
    for (int i = 0; i < batch; ++i) tasks_.push_back(meta::sample_task(K, bank.config.range, rng));
    const auto m = meta::meta_train_episode(bank, tasks_, rng);
    if (on_episode && (e % every == 0 || e == episodes - 1)) on_episode(static_cast<int>(e), m);
  }
  return bank;
}

meta::MetaEvaluation evaluate_meta(const Config& cfg, const meta::MetaBank& bank, int K) {
  Rng rng = stream(cfg, "eval", static_cast<std::uint64_t>(K));
  return meta::evaluate(bank, static_cast<int>(cfg.get_int("meta.eval_tasks")), K,
                        static_cast<int>(cfg.get_int("meta.adapt_steps")), rng);
}

std::vector<meta::PartitionCell> meta_partition(const Config& cfg, const meta::MetaBank& bank, int K) {
  Rng rng = stream(cfg, "partition", static_cast<std::uint64_t>(K));
  const int g = static_cast<int>(cfg.get_int("meta.grid"));
  return meta::partition_map(bank, g, g, K, rng);
}

// ------------------------------------------------------------ artifacts

std::filesystem::path run_directory(const Config& cfg, const std::filesystem::path& root) {
  return root / cfg.get_string("name") / ("seed-" + std::to_string(cfg.get_int("seed")));
}

namespace {

using Metrics = std::map<std::string, double>;
using Path = std::filesystem::path;

Metrics run_oracle_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  const oracle::TabularProblem prob = oracle_problem(cfg);
  const oracle::SolveResult res = run_oracle(cfg);
  write_csv(dir / "trace.csv", [&](std::ostream& os) {
    os << "sweep,objective\n";
    for (std::size_t i = 0; i < res.objective_trace.size(); ++i) csv_row(os, i + 1, res.objective_trace[i]);
  });
  const oracle::InfoTerms info = oracle::information_terms(prob, res.solution.sel, res.solution.act);
  ckpt = {{"problem", to_json(prob)}, {"solution", to_json(res.solution)}, {"converged", res.converged}};
  write_file(dir / "solution.json", ckpt.dump(2) + "\n");
  if (!res.converged) throw oracle::NotConverged(res.last_delta);
  return {{"objective", res.solution.objective},
          {"sweeps", res.sweeps},
          {"last_delta", res.last_delta},
          {"expected_utility", info.expected_utility},
          {"rate_xm", info.rate_xm},
          {"rate_xy_given_m", info.rate_xy_given_m}};
}

Metrics run_tabular_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  std::ostringstream trace;
  trace << "step,utility,free_energy,rate_xm,expert_kl\n";
  TraceSink sink{[&](int t, const supervised::StepMetrics& m) {
    csv_row(trace, t, m.utility, m.free_energy, m.rate_xm, m.expert_kl);
  }};
  const TabularOutcome out = train_tabular(cfg, 0, sink);
  write_file(dir / "trace.csv", trace.str());
  const oracle::InfoTerms li = oracle::information_terms(out.problem, out.learned.sel, out.learned.act);
  const oracle::InfoTerms oi =
      oracle::information_terms(out.problem, out.oracle.solution.sel, out.oracle.solution.act);
  write_csv(dir / "tabular.csv", [&](std::ostream& os) {
    os << "source,objective,expected_utility,rate_xm,rate_xy_given_m\n";
    csv_row(os, "oracle", out.oracle.solution.objective, oi.expected_utility, oi.rate_xm, oi.rate_xy_given_m);
    csv_row(os, "learner", out.learned.objective, li.expected_utility, li.rate_xm, li.rate_xy_given_m);
  });
  ckpt = {{"problem", to_json(out.problem)}, {"oracle", to_json(out.oracle.solution)}, {"learned", to_json(out.learned)}};
  return {{"oracle_objective", out.oracle.solution.objective},
          {"learned_objective", out.learned.objective},
          {"relative_gap", out.relative_gap}};
}

Metrics run_classification_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  const tasks::LabeledDataset data = classification_data(cfg);
  const int folds = static_cast<int>(cfg.get_int("data.folds"));
  const int M = static_cast<int>(cfg.get_int("model.experts"));
  std::ostringstream trace, fold_csv;
  trace << "fold,step,utility,free_energy,rate_xm,expert_kl\n";
  fold_csv << "fold,test_accuracy,train_accuracy,rate_xm,rate_xy_given_m," << join_header("usage_", M) << '\n';
  Metrics sum{{"test_accuracy", 0.0}, {"train_accuracy", 0.0}, {"rate_xm", 0.0}, {"rate_xy_given_m", 0.0}};
  ckpt = {{"folds", Json::array()}};
  for (int k = 0; k < folds; ++k) {
    TraceSink sink{[&](int t, const supervised::StepMetrics& m) {
      csv_row(trace, k, t, m.utility, m.free_energy, m.rate_xm, m.expert_kl);
    }};
    const FoldOutcome o = train_fold(cfg, data, k, sink);
    fold_csv << k << ',' << fmt_num(o.test.accuracy) << ',' << fmt_num(o.train.accuracy) << ','
             << fmt_num(o.test.rate_xm) << ',' << fmt_num(o.test.rate_xy_given_m);
    put_vector(fold_csv, o.test.usage);
    fold_csv << '\n';
    sum["test_accuracy"] += o.test.accuracy / folds;
    sum["train_accuracy"] += o.train.accuracy / folds;
    sum["rate_xm"] += o.test.rate_xm / folds;
    sum["rate_xy_given_m"] += o.test.rate_xy_given_m / folds;
    ckpt["folds"].push_back(to_json(o.bank));
  }
  write_file(dir / "trace.csv", trace.str());
  write_file(dir / "folds.csv", fold_csv.str());
  return sum;
}

Metrics run_rate_utility_kind(const Config& cfg, const Path& dir, Json&) {
  const tasks::LabeledDataset data = classification_data(cfg);
  const int folds = static_cast<int>(cfg.get_int("data.folds"));
  std::ostringstream cells, per_fold;
  cells << "beta1,beta2,rate_xm,rate_xy_given_m,accuracy\n";
  per_fold << "beta1,beta2,fold,rate_xm,rate_xy_given_m,accuracy\n";
  Metrics out;
  double best = 0.0;
  for (double b1 : cfg.get_doubles("sweep.beta1"))
    for (double b2 : cfg.get_doubles("sweep.beta2")) {
      Config cell = cfg;
      cell.set("rp.beta1", fmt_num(b1));
      cell.set("rp.beta2", fmt_num(b2));
      double ixm = 0.0, ixy = 0.0, acc = 0.0;
      for (int k = 0; k < folds; ++k) {
        const FoldOutcome o = train_fold(cell, data, k);
        csv_row(per_fold, b1, b2, k, o.test.rate_xm, o.test.rate_xy_given_m, o.test.accuracy);
        ixm += o.test.rate_xm / folds;
        ixy += o.test.rate_xy_given_m / folds;
        acc += o.test.accuracy / folds;
      }
      csv_row(cells, b1, b2, ixm, ixy, acc);
      best = std::max(best, acc);
    }
  write_file(dir / "surface.csv", cells.str());
  write_file(dir / "surface_folds.csv", per_fold.str());
  out["best_accuracy"] = best;
  return out;
}

Metrics run_density_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  std::ostringstream trace;
  trace << "step,free_energy,loglik,rate_xm,expert_kl\n";
  const DensityOutcome out = train_density(cfg, [&](int t, const density::DensityStepMetrics& m) {
    csv_row(trace, t, m.free_energy, m.loglik, m.rate_xm, m.expert_kl);
  });
  write_file(dir / "trace.csv", trace.str());
  const auto& bank = out.bank;
  const Eigen::VectorXd dist = nearest_mean_distance(bank, mixture_means(cfg));
  const auto D = static_cast<int>(bank.dim());
  write_csv(dir / "experts.csv", [&](std::ostream& os) {
    os << "expert,prior_m,nearest_mean_distance," << join_header("omega_", D);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) os << ",w_" << i << j;
    os << ",lambda,nu\n";
    for (int m = 0; m < bank.num_experts(); ++m) {
      const auto& p = bank.posteriors[m];
      os << m << ',' << fmt_num(bank.prior_m[m]) << ',' << fmt_num(dist(m));
      put_vector(os, p.omega);
      const Eigen::MatrixXd W = p.W();
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) os << ',' << fmt_num(W(i, j));
      os << ',' << fmt_num(p.lambda) << ',' << fmt_num(p.nu) << '\n';
    }
  });
  if (D == 2)
    write_csv(dir / "density_grid.csv", [&](std::ostream& os) {
      density::write_density_grid_csv(os, bank, cfg.get_double("density.grid_lo"), cfg.get_double("density.grid_hi"),
                                       static_cast<int>(cfg.get_int("density.grid_points")));
    });
  ckpt = to_json(bank);
  double mean_ll = 0.0;
  for (Eigen::Index i = 0; i < out.data.rows(); ++i)
    mean_ll += density::mixture_log_density(bank, out.data.row(i).transpose()) / static_cast<double>(out.data.rows());
  int neglected = 0;
  double worst_active = 0.0;
  for (int m = 0; m < bank.num_experts(); ++m) {
    if (bank.prior_m[m] < 0.02)
      ++neglected;
    else
      worst_active = std::max(worst_active, dist(m));
  }
  return {{"mean_log_density", mean_ll},
          {"neglected_experts", neglected},
          {"max_active_distance", worst_active}};
}

Metrics run_rl_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  const int M = static_cast<int>(cfg.get_int("model.experts"));
  std::ostringstream trace;
  trace << "iteration,mean_reward,mean_length,rate_xm,expert_kl,critic_loss,selector_critic_loss,"
        << join_header("prior_m_", M) << '\n';
  const rl::RLBank bank = train_rl(cfg, [&](int it, const rl::RLMetrics& m) {
    trace << it << ',' << fmt_num(m.mean_reward) << ',' << fmt_num(m.mean_length) << ',' << fmt_num(m.rate_xm) << ','
          << fmt_num(m.expert_kl) << ',' << fmt_num(m.critic_loss) << ',' << fmt_num(m.selector_critic_loss);
    put_vector(trace, m.prior_m);
    trace << '\n';
  });
  write_file(dir / "trace.csv", trace.str());
  const rl::EvalResult ev = evaluate_rl(cfg, bank);
  write_csv(dir / "eval.csv", [&](std::ostream& os) {
    os << "episode,length\n";
    for (std::size_t i = 0; i < ev.lengths.size(); ++i) csv_row(os, i, ev.lengths[i]);
  });
  write_csv(dir / "partition.csv", [&](std::ostream& os) {
    tasks::CartPoleParams params;
    params.max_steps = static_cast<int>(cfg.get_int("rl.max_steps"));
    tasks::CartPole env(params);
    Rng rng = stream(cfg, "partition");
    rl::write_partition_csv(os, env, bank, static_cast<int>(cfg.get_int("rl.partition_episodes")), params.max_steps,
                            rng);
  });
  ckpt = to_json(bank);
  Metrics out{{"eval_mean_length", ev.mean_length}};
  for (int m = 0; m < M; ++m) out["share_" + std::to_string(m)] = ev.expert_share(m);
  return out;
}

Metrics run_meta_kind(const Config& cfg, const Path& dir, Json& ckpt) {
  const int M = static_cast<int>(cfg.get_int("model.experts"));
  std::ostringstream trace;
  trace << "episode,free_energy,val_mse,rate_xm," << join_header("usage_", M) << '\n';
  const meta::MetaBank bank = train_meta(cfg, [&](int e, const meta::MetaMetrics& m) {
    trace << e << ',' << fmt_num(m.free_energy) << ',' << fmt_num(m.val_mse) << ',' << fmt_num(m.rate_xm);
    put_vector(trace, m.usage);
    trace << '\n';
  });
  write_file(dir / "trace.csv", trace.str());
  Metrics out;
  std::ostringstream eval;
  eval << "k,pre_mse,post_mse,improved_fraction,rate_xm,confidence,partition_confidence\n";
  for (int K : cfg.get_ints("meta.eval_k")) {
    const meta::MetaEvaluation ev = evaluate_meta(cfg, bank, K);
    const auto cells = meta_partition(cfg, bank, K);
    const double conf = meta::mean_confidence(cells);
    csv_row(eval, K, ev.pre_mse, ev.post_mse, ev.improved_fraction, ev.rate_xm, ev.confidence, conf);
    write_csv(dir / ("partition_k" + std::to_string(K) + ".csv"),
              [&](std::ostream& os) { meta::write_partition_csv(os, cells); });
    const std::string s = "_k" + std::to_string(K);
    out["post_mse" + s] = ev.post_mse;
    out["pre_mse" + s] = ev.pre_mse;
    out["rate_xm" + s] = ev.rate_xm;
    out["partition_confidence" + s] = conf;
  }
  write_file(dir / "eval.csv", eval.str());
  ckpt = to_json(bank);
  return out;
}

}  // namespace

RunSummary run(const Config& cfg, const std::filesystem::path& root) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.dir = run_directory(cfg, root);
  std::error_code ec;
  std::filesystem::create_directories(summary.dir, ec);
  if (ec) throw RuntimeFailure("cannot create " + summary.dir.string() + ": " + ec.message());

  Json ckpt;
  try {
    switch (cfg.kind()) {
      case config::Kind::Oracle: summary.metrics = run_oracle_kind(cfg, summary.dir, ckpt); break;
      case config::Kind::Supervised:
        summary.metrics = cfg.get_string("data.name") == "tabular" ? run_tabular_kind(cfg, summary.dir, ckpt)
                                                                   : run_classification_kind(cfg, summary.dir, ckpt);
        break;
      case config::Kind::RateUtilitySweep: summary.metrics = run_rate_utility_kind(cfg, summary.dir, ckpt); break;
      case config::Kind::Density: summary.metrics = run_density_kind(cfg, summary.dir, ckpt); break;
      case config::Kind::RL: summary.metrics = run_rl_kind(cfg, summary.dir, ckpt); break;
      case config::Kind::Meta: summary.metrics = run_meta_kind(cfg, summary.dir, ckpt); break;
    }
  } catch (const oracle::NotConverged& e) {
    throw RuntimeFailure(e.what());
  } catch (const NonFiniteGradient& e) {
    throw RuntimeFailure(e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw RuntimeFailure(e.what());
  }
  if (!ckpt.is_null() && cfg.kind() != config::Kind::Oracle)
    write_file(summary.dir / "checkpoint.json", ckpt.dump() + "\n");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json manifest = {{"kind", config::to_string(cfg.kind())},
                   {"seed", cfg.get_int("seed")},
                   {"version", HEXPERT_VERSION},
                   {"wall_time_s", wall},
                   {"config", cfg.to_json()},
                   {"metrics", summary.metrics}};
  write_file(summary.dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

std::vector<RunSummary> sweep(const Config& cfg, const std::filesystem::path& root) {
  cfg.validate();
  const std::string param = cfg.get_string("sweep.param");
  std::vector<std::string> values{""};
  if (!param.empty()) {
    values.clear();
    std::stringstream ss(cfg.get_string("sweep.values"));
    std::string v;
    while (std::getline(ss, v, ',')) {
      const auto b = v.find_first_not_of(' ');
      const auto e = v.find_last_not_of(' ');
      values.push_back(b == std::string::npos ? "" : v.substr(b, e - b + 1));
    }
  }
  const std::string name = cfg.get_string("name");
  std::vector<RunSummary> out;
  std::ostringstream table;
  bool header = false;
  for (const auto& v : values)
    for (int seed : cfg.get_ints("sweep.seeds")) {
      Config cell = cfg;
      cell.set("seed", std::to_string(seed));
      if (!param.empty()) {
        cell.set(param, v);
        cell.set("name", name + "/" + param + "=" + v);
      }
      RunSummary r = run(cell, root);
      if (!header) {
        table << "param,value,seed";
        for (const auto& [k, _] : r.metrics) table << ',' << k;
        table << '\n';
        header = true;
      }
      table << param << ',' << v << ',' << seed;
      for (const auto& [_, x] : r.metrics) table << ',' << fmt_num(x);
      table << '\n';
      out.push_back(std::move(r));
    }
  std::filesystem::create_directories(root / name);
  write_file(root / name / "sweep.csv", table.str());
  return out;
}

}  // namespace hexpert::runner
