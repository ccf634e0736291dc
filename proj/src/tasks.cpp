#include "hexpert/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "hexpert/csv.hpp"

namespace hexpert::tasks {

LabeledDataset LabeledDataset::subset(const std::vector<Eigen::Index>& rows) const {
  LabeledDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i)) = labels(rows[i]);
  }
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

void standardize(Eigen::MatrixXd& inputs) {
  const Eigen::RowVectorXd mean = inputs.colwise().mean();
  inputs.rowwise() -= mean;
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const double sd = std::sqrt(inputs.col(j).squaredNorm() / static_cast<double>(inputs.rows()));
    if (sd > 0.0) inputs.col(j) /= sd;
  }
}

LabeledDataset make_classification(const std::string& name, Eigen::Index n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_classification: n must be >= 2");
  if (noise < 0.0) throw std::invalid_argument("make_classification: noise must be >= 0");
  Rng rng = Rng(seed).derive("classification:" + name);
  LabeledDataset d;
  d.name = name;
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  constexpr double pi = std::numbers::pi;

  if (name == "moons") {
    d.num_classes = 2;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % 2);
      const double t = rng.uniform(0.0, pi);
      double x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
      x += noise * rng.normal();
      y += noise * rng.normal();
      d.inputs.row(i) << x, y;
      d.labels(i) = c;
    }
  } else if (name == "circles") {
    d.num_classes = 2;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % 2);  // 0 outer, 1 inner
      const double r = c == 0 ? 1.0 : 0.5;
      const double t = rng.uniform(0.0, 2.0 * pi);
      const double x = r * std::cos(t) + noise * rng.normal();
      const double y = r * std::sin(t) + noise * rng.normal();
      d.inputs.row(i) << x, y;
      d.labels(i) = c;
    }
  } else if (name == "blobs") {
    d.num_classes = 3;
    const double centers[3][2] = {{0.0, 2.0}, {-std::sqrt(3.0), -1.0}, {std::sqrt(3.0), -1.0}};
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % 3);
      d.inputs.row(i) << centers[c][0] + noise * rng.normal(), centers[c][1] + noise * rng.normal();
      d.labels(i) = c;
    }
  } else {
    throw std::invalid_argument("make_classification: unknown dataset '" + name + "'");
  }
  standardize(d.inputs);
  return d;
}

FoldSplit kfold_split(const LabeledDataset& data, int folds, int k, std::uint64_t seed) {
  if (folds < 2 || k < 0 || k >= folds) throw std::invalid_argument("kfold_split: bad fold index");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng = Rng(seed).derive("kfold");
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<Eigen::Index> train, test;
  for (std::size_t i = 0; i < perm.size(); ++i)
    (static_cast<int>(i % static_cast<std::size_t>(folds)) == k ? test : train).push_back(perm[i]);
  return {data.subset(train), data.subset(test)};
}

Eigen::MatrixXd sample_mixture(const std::vector<Eigen::VectorXd>& means, double cov_scale, Eigen::Index n,
                               std::uint64_t seed) {
  if (means.empty()) throw std::invalid_argument("sample_mixture: empty means list");
  if (n < 1) throw std::invalid_argument("sample_mixture: n must be >= 1");
  if (!(cov_scale > 0.0)) throw std::invalid_argument("sample_mixture: cov_scale must be > 0");
  const Eigen::Index dim = means.front().size();
  for (const auto& m : means)
    if (m.size() != dim) throw std::invalid_argument("sample_mixture: means differ in dimension");
  Rng rng = Rng(seed).derive("mixture");
  const double sd = std::sqrt(cov_scale);
  Eigen::MatrixXd out(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mu = means[static_cast<std::size_t>(i) % means.size()];
    for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = mu(j) + sd * rng.normal();
  }
  return out;
}

double SineTask::operator()(double x) const { return a * std::sin(x + b); }

SineTask sample_sine_task(Rng& rng) {
  SineTask t;
  t.a = rng.uniform(0.1, 5.0);
  t.b = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return t;
}

std::pair<RegressionSplit, RegressionSplit> sine_dataset(const SineTask& task, int K, XRange range, Rng& rng) {
  if (K < 1) throw std::invalid_argument("sine_dataset: K must be >= 1");
  if (!(range.hi > range.lo)) throw std::invalid_argument("sine_dataset: empty x range");
  auto draw = [&] {
    RegressionSplit s;
    s.x.resize(K);
    s.y.resize(K);
    for (int i = 0; i < K; ++i) {
      s.x(i) = rng.uniform(range.lo, range.hi);
      s.y(i) = task(s.x(i));
    }
    return s;
  };
  RegressionSplit train = draw();
  RegressionSplit val = draw();
  return {std::move(train), std::move(val)};
}

CartPoleState cartpole_reset(Rng& rng) {
  CartPoleState s;
  s.x = rng.uniform(-0.05, 0.05);
  s.x_dot = rng.uniform(-0.05, 0.05);
  s.theta = rng.uniform(-0.05, 0.05);
  s.theta_dot = rng.uniform(-0.05, 0.05);
  return s;
}

CartPoleStep cartpole_step(const CartPoleState& s, double signal, int steps_taken, const CartPoleParams& p) {
  if (!std::isfinite(s.x) || !std::isfinite(s.x_dot) || !std::isfinite(s.theta) || !std::isfinite(s.theta_dot) ||
      !std::isfinite(signal))
    throw std::domain_error("cartpole_step: non-finite state or action");
  const double force = p.force_mag * std::clamp(signal, -1.0, 1.0);
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_ml = p.pole_mass * p.half_length;
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  const double temp = (force + pole_ml * s.theta_dot * s.theta_dot * sn) / total_mass;
  const double theta_acc =
      (p.gravity * sn - c * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * c * c / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * c / total_mass;

  CartPoleStep r;
  r.next.x = s.x + p.tau * s.x_dot;
  r.next.x_dot = s.x_dot + p.tau * x_acc;
  r.next.theta = s.theta + p.tau * s.theta_dot;
  r.next.theta_dot = s.theta_dot + p.tau * theta_acc;
  r.reward = 1.0;
  const bool failed = std::abs(r.next.theta) > p.theta_limit || std::abs(r.next.x) > p.x_limit;
  const bool out_of_time = steps_taken + 1 >= p.max_steps;
  r.done = failed || out_of_time;
  r.truncated = out_of_time && !failed;
  return r;
}

void write_dataset_csv(std::ostream& os, const LabeledDataset& data) {
  for (Eigen::Index j = 0; j < data.dim(); ++j) os << 'x' << (j + 1) << ',';
  os << "label\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) os << fmt_num(data.inputs(i, j)) << ',';
    os << data.labels(i) << '\n';
  }
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "t,x,x_dot,theta,theta_dot,action,reward,done\n";
  for (const auto& r : trace)
    csv_row(os, r.t, r.state.x, r.state.x_dot, r.state.theta, r.state.theta_dot, r.action, r.reward,
            r.done ? 1 : 0);
}

}  // namespace hexpert::tasks
