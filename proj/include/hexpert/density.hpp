#pragma once

// Density estimation with Normal-Wishart experts behind an
// information-constrained selector. Each datum is routed to one expert,
// which scores it with the Gaussian log-likelihood of a single
// reparameterized (mu, Lambda) draw minus its KL to a frozen prior block.

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/net.hpp"
#include "hexpert/normal_wishart.hpp"
#include "hexpert/rng.hpp"

namespace hexpert::density {

struct DensityConfig {
  int num_experts = 4;
  std::vector<int> selector_hidden{10, 10};
  Activation activation = Activation::Tanh;
  double lambda = 25.0;       // posterior mean-precision scale
  double prior_lambda = 1.0;  // prior block mean-precision scale
  double nu = 0.0;            // 0 selects D + 2
  bool init_at_data = false;  // posterior omegas seeded at spread-out data points (k-means++)
  ResourceParams rp;
  AdamConfig selector_adam;
  AdamConfig expert_adam;
  double baseline_decay = 0.99;
};

struct DensityBank {
  DensityConfig config;
  NetD selector;
  std::vector<NormalWishartD> posteriors;
  std::vector<NormalWishartD> priors;  // frozen after construction
  Simplex prior_m;
  ResourceParams rp;

  AdamD selector_opt;
  std::vector<VectorAdam<double>> expert_opt;
  double baseline = 0.0;
  bool baseline_init = false;

  int num_experts() const { return static_cast<int>(posteriors.size()); }
  Eigen::Index dim() const { return selector.input_dim(); }
  Simplex selector_posterior(const Eigen::VectorXd& x) const;
};

// Prior blocks: omega uniform in the bounding box of `data`, W = I / nu.
// Posteriors start equal to their priors except for lambda (and omega when
// init_at_data is set).
DensityBank make_density_bank(const Eigen::MatrixXd& data, const DensityConfig& cfg, Rng& rng);

// One Monte-Carlo draw from expert m's posterior:
// loglik(x | mu, lambda Lambda) - nw_kl(posterior, prior) / beta2.
double density_free_energy(const DensityBank& bank, int m, const Eigen::VectorXd& x, Rng& rng);

struct DensityStepMetrics {
  double free_energy = 0.0;
  double loglik = 0.0;
  double rate_xm = 0.0;
  double expert_kl = 0.0;  // mean KL of the sampled experts
};

// Rows of `batch` are data points. Per datum: m ~ p(m|x), one draw from
// expert m, score-function selector gradient, reparameterized gradient of
// expert m's free energy with respect to (omega, chol W), EMA of p(m).
DensityStepMetrics density_train_step(DensityBank& bank, const Eigen::MatrixXd& batch, Rng& rng);

// Plug-in mixture density sum_m p(m) N(x | omega_m, (lambda nu W_m)^{-1}).
double mixture_log_density(const DensityBank& bank, const Eigen::VectorXd& x);

// Rows "x1,x2,log_density" over a regular grid; 2-D banks only.
void write_density_grid_csv(std::ostream& os, const DensityBank& bank, double lo, double hi, int points);

}  // namespace hexpert::density
