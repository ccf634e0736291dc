#pragma once

// Probability and information primitives. All information quantities are in
// nats.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hexpert/rng.hpp"

namespace hexpert {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AbsoluteContinuityViolation : std::domain_error {
  using std::domain_error::domain_error;
};

struct InvalidSimplex : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Entries of a KL reference distribution are floored at this value before
// use inside learners (EMA priors can underflow).
inline constexpr double kProbFloor = 1e-12;

// Finite categorical distribution. Entries are non-negative and sum to one
// within 1e-9; the constructor enforces it.
class Simplex {
 public:
  Simplex() = default;

  explicit Simplex(Eigen::VectorXd probs) : p_(std::move(probs)) {
    if (p_.size() < 1) throw InvalidSimplex("simplex must have dimension >= 1");
    if (!p_.allFinite() || (p_.array() < 0.0).any())
      throw InvalidSimplex("simplex entries must be finite and non-negative");
    if (std::abs(p_.sum() - 1.0) > 1e-9)
      throw InvalidSimplex("simplex entries must sum to 1 (got " + std::to_string(p_.sum()) + ")");
  }

  static Simplex uniform(Eigen::Index n) {
    return Simplex(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
  }

  static Simplex one_hot(Eigen::Index n, Eigen::Index i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v(i) = 1.0;
    return Simplex(std::move(v));
  }

  // Normalizes non-negative weights.
  static Simplex normalized(const Eigen::Ref<const Eigen::VectorXd>& w) {
    const double s = w.sum();
    if (!(s > 0.0)) throw InvalidSimplex("cannot normalize weights with non-positive sum");
    return Simplex(w / s);
  }

  Eigen::Index size() const { return p_.size(); }
  double operator()(Eigen::Index i) const { return p_(i); }
  double operator[](Eigen::Index i) const { return p_(i); }
  const Eigen::VectorXd& probs() const { return p_; }

  // Copy with every entry floored at kProbFloor, renormalized.
  Simplex floored(double floor = kProbFloor) const {
    Eigen::VectorXd v = p_.cwiseMax(floor);
    return Simplex(v / v.sum());
  }

  friend bool operator==(const Simplex& a, const Simplex& b) { return a.p_ == b.p_; }

 private:
  Eigen::VectorXd p_;
};

// Inverse temperatures, EMA momenta and RL discount.
struct ResourceParams {
  double beta1 = 25.0;    // selector
  double beta2 = 10.0;    // experts
  double lambda1 = 0.99;  // momentum of p(y|m)
  double lambda2 = 0.99;  // momentum of p(m)
  double gamma = 0.99;

  void validate() const {
    if (!(beta1 > 0.0) || !std::isfinite(beta1)) throw std::invalid_argument("beta1 must be > 0");
    if (!(beta2 > 0.0) || !std::isfinite(beta2)) throw std::invalid_argument("beta2 must be > 0");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(lambda1)) throw std::invalid_argument("lambda1 must lie in [0,1]");
    if (!unit(lambda2)) throw std::invalid_argument("lambda2 must lie in [0,1]");
    if (!unit(gamma)) throw std::invalid_argument("gamma must lie in [0,1]");
  }
};

// -sum p ln p with 0 ln 0 = 0.
inline double entropy(const Simplex& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return h;
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) + " vs " +
                            std::to_string(b));
}

inline double kl(const Simplex& p, const Simplex& q) {
  require_same_dim(p.size(), q.size(), "kl");
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) == 0.0) continue;
    if (q(i) == 0.0)
      throw AbsoluteContinuityViolation("kl: p(" + std::to_string(i) + ") > 0 but q(" +
                                        std::to_string(i) + ") = 0");
    d += p(i) * std::log(p(i) / q(i));
  }
  return std::max(d, 0.0);
}

// KL against a reference floored at kProbFloor; used wherever the reference
// is a learned (EMA) prior.
inline double kl_floored(const Simplex& p, const Simplex& q) { return kl(p, q.floored()); }

// sum_x w(x) KL(post_x || prior). Equals I(X;M) when prior is the exact
// w-weighted marginal of the posteriors.
inline double rate(std::span<const Simplex> posteriors, const Simplex& weights,
                   const Simplex& prior) {
  require_same_dim(static_cast<Eigen::Index>(posteriors.size()), weights.size(), "rate weights");
  double r = 0.0;
  for (std::size_t x = 0; x < posteriors.size(); ++x) {
    require_same_dim(posteriors[x].size(), prior.size(), "rate posterior");
    if (weights(static_cast<Eigen::Index>(x)) > 0.0)
      r += weights(static_cast<Eigen::Index>(x)) * kl(posteriors[x], prior);
  }
  return r;
}

// p*(i) proportional to prior(i) exp(beta score(i)), evaluated in log space
// with max-subtraction.
inline Simplex gibbs_posterior(const Simplex& prior, const Eigen::Ref<const Eigen::VectorXd>& scores,
                               double beta) {
  require_same_dim(prior.size(), scores.size(), "gibbs_posterior");
  if (beta < 0.0) throw std::invalid_argument("gibbs_posterior: beta must be >= 0");
  if (beta == 0.0) return prior;
  const Eigen::Index n = prior.size();
  Eigen::VectorXd logits(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    logits(i) = prior(i) > 0.0 ? std::log(prior(i)) + beta * scores(i)
                               : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, logits(i));
  }
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i) = std::isinf(logits(i)) ? 0.0 : std::exp(logits(i) - mx);
  return Simplex(w / w.sum());
}

inline Simplex ema_update(const Simplex& prior, const Simplex& posterior, double lambda) {
  require_same_dim(prior.size(), posterior.size(), "ema_update");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("ema_update: lambda outside [0,1]");
  Eigen::VectorXd v = lambda * prior.probs() + (1.0 - lambda) * posterior.probs();
  return Simplex(v / v.sum());
}

// Inverse-CDF draw; consumes exactly one uniform.
inline Eigen::Index sample(const Simplex& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    acc += p(i);
    last = i;
    if (u < acc) return i;
  }
  return last;
}

// Mutual information of a joint table (rows x, cols y), computed directly.
template <typename Derived>
double mutual_information(const Eigen::MatrixBase<Derived>& joint) {
  const Eigen::VectorXd px = joint.rowwise().sum();
  const Eigen::RowVectorXd py = joint.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j)
      if (joint(i, j) > 0.0) mi += joint(i, j) * std::log(joint(i, j) / (px(i) * py(j)));
  return std::max(mi, 0.0);
}

}  // namespace hexpert
