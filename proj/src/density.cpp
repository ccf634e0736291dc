#include "hexpert/density.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "hexpert/csv.hpp"

namespace hexpert::density {

namespace {

Eigen::Index packed_size(Eigen::Index d) { return d + d * (d + 1) / 2; }

Eigen::VectorXd pack(const Eigen::VectorXd& omega, const Eigen::MatrixXd& chol) {
  const Eigen::Index d = omega.size();
  Eigen::VectorXd v(packed_size(d));
  v.head(d) = omega;
  Eigen::Index k = d;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) v(k++) = chol(i, j);
  return v;
}

void unpack(const Eigen::VectorXd& v, Eigen::VectorXd& omega, Eigen::MatrixXd& chol) {
  const Eigen::Index d = omega.size();
  omega = v.head(d);
  Eigen::Index k = d;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) chol(i, j) = v(k++);
}

}  // namespace

Simplex DensityBank::selector_posterior(const Eigen::VectorXd& x) const {
  TapeD tape;
  return softmax_simplex(selector.forward(x, tape));
}

DensityBank make_density_bank(const Eigen::MatrixXd& data, const DensityConfig& cfg, Rng& rng) {
  if (data.rows() < 1 || data.cols() < 1) throw std::invalid_argument("make_density_bank: empty data");
  if (cfg.num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
  cfg.rp.validate();
  const Eigen::Index d = data.cols();
  const double nu = cfg.nu > 0.0 ? cfg.nu : static_cast<double>(d) + 2.0;

  DensityBank bank;
  bank.config = cfg;
  bank.config.nu = nu;
  bank.rp = cfg.rp;
  std::vector<int> sizes{static_cast<int>(d)};
  sizes.insert(sizes.end(), cfg.selector_hidden.begin(), cfg.selector_hidden.end());
  sizes.push_back(cfg.num_experts);
  bank.selector = NetD(sizes, cfg.activation, Head::Softmax, rng);
  bank.selector_opt = AdamD(bank.selector, cfg.selector_adam);

  const Eigen::RowVectorXd lo = data.colwise().minCoeff();
  const Eigen::RowVectorXd hi = data.colwise().maxCoeff();
  const Eigen::MatrixXd W0 = Eigen::MatrixXd::Identity(d, d) / nu;
  for (int m = 0; m < cfg.num_experts; ++m) {
    Eigen::VectorXd omega(d);
    for (Eigen::Index j = 0; j < d; ++j) omega(j) = rng.uniform(lo(j), hi(j));
    bank.priors.emplace_back(omega, cfg.prior_lambda, W0, nu);
    bank.posteriors.emplace_back(omega, cfg.lambda, W0, nu);
    bank.expert_opt.emplace_back(packed_size(d), cfg.expert_adam);
  }
  if (cfg.init_at_data) {
    // k-means++ seeding: each next omega is a datum drawn with probability
    // proportional to its squared distance from the nearest chosen one.
    Eigen::VectorXd dist2 = Eigen::VectorXd::Constant(data.rows(), 1.0);
    for (int m = 0; m < cfg.num_experts; ++m) {
      const Eigen::Index pick = sample(Simplex::normalized(dist2), rng);
      bank.posteriors[m].omega = data.row(pick).transpose();
      dist2 = dist2.cwiseMin((data.rowwise() - data.row(pick)).rowwise().squaredNorm());
      if (!(dist2.sum() > 0.0)) dist2.setOnes();
    }
  }
  bank.prior_m = Simplex::uniform(cfg.num_experts);
  return bank;
}

double density_free_energy(const DensityBank& bank, int m, const Eigen::VectorXd& x, Rng& rng) {
  if (m < 0 || m >= bank.num_experts()) throw std::out_of_range("expert index out of range");
  const NormalWishartD& post = bank.posteriors[m];
  const NWSample<double> s = nw_sample(post, rng);
  const Eigen::MatrixXd precision = post.lambda * s.Lambda;
  return gaussian_loglik<double>(x, s.mu, precision) - nw_kl(post, bank.priors[m]) / bank.rp.beta2;
}

DensityStepMetrics density_train_step(DensityBank& bank, const Eigen::MatrixXd& batch, Rng& rng) {
  const Eigen::Index n = batch.rows();
  if (n < 1) throw std::invalid_argument("density_train_step: empty batch");
  const int M = bank.num_experts();
  const Eigen::Index d = bank.dim();
  const double inv_b1 = 1.0 / bank.rp.beta1;
  const double inv_b2 = 1.0 / bank.rp.beta2;

  ParamSetD sel_grad = bank.selector.zeros_like();
  std::vector<Eigen::VectorXd> g_omega(static_cast<std::size_t>(M), Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> g_chol(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(d, d));
  std::vector<int> counts(static_cast<std::size_t>(M), 0);

  // The KL term and its gradient depend only on the expert, not the datum.
  std::vector<double> kl_val(static_cast<std::size_t>(M));
  std::vector<Eigen::VectorXd> kl_omega(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> kl_chol(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    kl_val[m] = nw_kl(bank.posteriors[m], bank.priors[m]);
    nw_kl_grad(bank.posteriors[m], bank.priors[m], kl_omega[m], kl_chol[m]);
  }

  TapeD tape;
  DensityStepMetrics out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = batch.row(i).transpose();
    const Eigen::VectorXd p_sel = softmax(bank.selector.forward(x, tape));
    const Simplex sel{p_sel / p_sel.sum()};
    const int m = static_cast<int>(sample(sel, rng));
    const Simplex q_m = bank.prior_m.floored();

    const NWSample<double> s = nw_sample(bank.posteriors[m], rng);
    const LoglikGrad<double> lg = sample_loglik_grad(bank.posteriors[m], s, x);
    const double f = lg.value - inv_b2 * kl_val[m];

    if (!bank.baseline_init) {
      bank.baseline = f;
      bank.baseline_init = true;
    }
    const double score = (f - bank.baseline) - inv_b1 * (std::log(std::max(p_sel(m), kProbFloor)) - std::log(q_m[m]));
    Eigen::VectorXd g_sel = score * p_sel;
    g_sel(m) -= score;
    bank.selector.backward(tape, g_sel, sel_grad);

    g_omega[m] += lg.d_omega - inv_b2 * kl_omega[m];
    g_chol[m] += lg.d_chol - inv_b2 * kl_chol[m];
    ++counts[static_cast<std::size_t>(m)];

    bank.baseline = bank.config.baseline_decay * bank.baseline + (1.0 - bank.config.baseline_decay) * f;
    bank.prior_m = ema_update(bank.prior_m, sel, bank.rp.lambda2);

    out.free_energy += f;
    out.loglik += lg.value;
    out.expert_kl += kl_val[m];
    out.rate_xm += kl(sel, q_m);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  scale(sel_grad, inv_n);
  bank.selector_opt.step(bank.selector, sel_grad);
  for (int m = 0; m < M; ++m) {
    if (counts[static_cast<std::size_t>(m)] == 0) continue;
    NormalWishartD& post = bank.posteriors[m];
    Eigen::VectorXd params = pack(post.omega, post.chol);
    const Eigen::VectorXd grad = -inv_n * pack(g_omega[m], g_chol[m]);
    bank.expert_opt[m].step(params, grad);
    unpack(params, post.omega, post.chol);
  }
  out.free_energy *= inv_n;
  out.loglik *= inv_n;
  out.expert_kl *= inv_n;
  out.rate_xm *= inv_n;
  return out;
}

double mixture_log_density(const DensityBank& bank, const Eigen::VectorXd& x) {
  std::vector<double> terms;
  for (int m = 0; m < bank.num_experts(); ++m) {
    if (bank.prior_m[m] <= 0.0) continue;
    const NormalWishartD& nw = bank.posteriors[m];
    const Eigen::MatrixXd precision = nw.lambda * nw.nu * nw.W();
    terms.push_back(std::log(bank.prior_m[m]) + gaussian_loglik<double>(x, nw.omega, precision));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

void write_density_grid_csv(std::ostream& os, const DensityBank& bank, double lo, double hi, int points) {
  if (bank.dim() != 2) throw DimensionMismatch("write_density_grid_csv: needs 2-D data");
  if (points < 2 || !(hi > lo)) throw std::invalid_argument("write_density_grid_csv: bad grid");
  os << "x1,x2,log_density\n";
  const double step = (hi - lo) / (points - 1);
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < points; ++j) {
      const Eigen::Vector2d x(lo + i * step, lo + j * step);
      csv_row(os, x(0), x(1), mixture_log_density(bank, x));
    }
}

}  // namespace hexpert::density
