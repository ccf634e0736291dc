#pragma once

// Normal-Wishart parameter blocks p(mu, Lambda | omega, lambda, W, nu):
// reparameterized sampling, the Gaussian log-likelihood under a sampled
// (mu, lambda * Lambda), the closed-form KL between two blocks, and their
// gradients with respect to (omega, chol(W)).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hexpert/distrib.hpp"
#include "hexpert/rng.hpp"

namespace hexpert {

struct NotPositiveDefinite : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConstantTermUnsupported : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
struct NormalWishart {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vec omega;   // mean of the mean
  Scalar lambda = Scalar(1);
  Mat chol;    // lower-triangular L with W = L L^T
  Scalar nu = Scalar(3);

  NormalWishart() = default;
  NormalWishart(Vec omega_, Scalar lambda_, const Mat& W, Scalar nu_) : omega(std::move(omega_)), lambda(lambda_), nu(nu_) {
    if (W.rows() != omega.size() || W.cols() != omega.size())
      throw DimensionMismatch("NormalWishart: W must be D x D with D = dim(omega)");
    Eigen::LLT<Mat> llt(W);
    if (llt.info() != Eigen::Success || !W.isApprox(W.transpose()))
      throw NotPositiveDefinite("NormalWishart: W is not symmetric positive-definite");
    chol = llt.matrixL();
    validate();
  }

  Eigen::Index dim() const { return omega.size(); }
  Mat W() const { return chol * chol.transpose(); }

  void validate() const {
    const Eigen::Index d = dim();
    if (d < 1) throw std::invalid_argument("NormalWishart: dimension must be >= 1");
    if (chol.rows() != d || chol.cols() != d) throw DimensionMismatch("NormalWishart: chol shape");
    if (!(lambda > Scalar(0))) throw std::invalid_argument("NormalWishart: lambda must be > 0");
    if (!(nu > Scalar(d - 1))) throw std::invalid_argument("NormalWishart: nu must exceed D - 1");
    if (!omega.allFinite() || !chol.allFinite()) throw std::invalid_argument("NormalWishart: non-finite parameters");
    Eigen::LLT<Mat> llt(W());
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("NormalWishart: W lost positive-definiteness");
  }
};

using NormalWishartD = NormalWishart<double>;

// One draw plus the noise that produced it, so gradients can flow through
// the sample. Lambda = C C^T with C = L A (Bartlett), and
// mu = omega + C^{-T} z / sqrt(lambda).
template <typename Scalar>
struct NWSample {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Vec mu;
  Mat Lambda;
  Mat A;  // Bartlett factor
  Mat C;  // chol(Lambda)
  Vec z;
};

template <typename Scalar>
NWSample<Scalar> nw_sample(const NormalWishart<Scalar>& nw, Rng& rng) {
  using Mat = typename NWSample<Scalar>::Mat;
  using Vec = typename NWSample<Scalar>::Vec;
  const Eigen::Index d = nw.dim();
  NWSample<Scalar> s;
  s.A = Mat::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    s.A(i, i) = static_cast<Scalar>(std::sqrt(rng.chi_squared(static_cast<double>(nw.nu) - static_cast<double>(i))));
    for (Eigen::Index j = 0; j < i; ++j) s.A(i, j) = static_cast<Scalar>(rng.normal());
  }
  s.C = nw.chol.template triangularView<Eigen::Lower>() * s.A;
  s.Lambda = s.C * s.C.transpose();
  s.z.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) s.z(i) = static_cast<Scalar>(rng.normal());
  const Vec shift = s.C.transpose().template triangularView<Eigen::Upper>().solve(s.z);
  s.mu = nw.omega + shift / std::sqrt(nw.lambda);
  return s;
}

// Standard multivariate normal log-density with the given precision matrix.
template <typename Scalar>
Scalar gaussian_loglik(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mu,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& precision) {
  const Eigen::Index d = x.size();
  if (mu.size() != d || precision.rows() != d || precision.cols() != d)
    throw DimensionMismatch("gaussian_loglik: shapes disagree");
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(precision);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("gaussian_loglik: precision is not positive-definite");
  const auto diff = (x - mu).eval();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> L = llt.matrixL();
  const Scalar logdet = Scalar(2) * L.diagonal().array().log().sum();
  const Scalar quad = diff.dot(precision * diff);
  const Scalar log2pi = static_cast<Scalar>(std::log(2.0 * std::numbers::pi));
  return Scalar(-0.5) * (static_cast<Scalar>(d) * log2pi - logdet + quad);
}

// Log-likelihood of x under the drawn (mu, lambda * Lambda) together with
// its gradient with respect to omega and chol(W), holding the noise fixed.
template <typename Scalar>
struct LoglikGrad {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Scalar value = Scalar(0);
  Vec d_omega;
  Mat d_chol;  // lower-triangular
};

template <typename Scalar>
LoglikGrad<Scalar> sample_loglik_grad(const NormalWishart<Scalar>& nw, const NWSample<Scalar>& s,
                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) {
  using Mat = typename LoglikGrad<Scalar>::Mat;
  using Vec = typename LoglikGrad<Scalar>::Vec;
  const Eigen::Index d = nw.dim();
  const Scalar lam = nw.lambda;
  const Vec dx = x - nw.omega;
  const Vec v = s.C.transpose() * dx - s.z / std::sqrt(lam);
  const Scalar log2pi = static_cast<Scalar>(std::log(2.0 * std::numbers::pi));
  LoglikGrad<Scalar> g;
  g.value = Scalar(-0.5) * static_cast<Scalar>(d) * log2pi + Scalar(0.5) * static_cast<Scalar>(d) * std::log(lam) +
            s.C.diagonal().array().abs().log().sum() - Scalar(0.5) * lam * v.squaredNorm();
  g.d_omega = lam * (s.C * v);
  Mat dC = -lam * dx * v.transpose();
  dC.diagonal() += s.C.diagonal().cwiseInverse();
  dC = dC.template triangularView<Eigen::Lower>();
  g.d_chol = (dC * s.A.transpose()).template triangularView<Eigen::Lower>();
  return g;
}

// KL(p || q) without the constant that depends only on (lambda, nu):
//   (lambda_q/2) d^T nu_p W_p d - (nu_q/2) ln|W_q^{-1} W_p| + (nu_p/2)(tr(W_q^{-1} W_p) - D),
// d = omega_q - omega_p. With include_constant, only equal (lambda, nu) are
// accepted; the constant is then zero and the value is the exact KL.
template <typename Scalar>
Scalar nw_kl(const NormalWishart<Scalar>& p, const NormalWishart<Scalar>& q, bool include_constant = false) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require_same_dim(p.dim(), q.dim(), "nw_kl");
  if (include_constant && (p.lambda != q.lambda || p.nu != q.nu))
    throw ConstantTermUnsupported("nw_kl: constant term needs equal lambda and nu");
  const Eigen::Index d = p.dim();
  const auto delta = (q.omega - p.omega).eval();
  const Mat Wp = p.W();
  // W_q^{-1} W_p via the Cholesky factor of W_q.
  const auto Lq = q.chol.template triangularView<Eigen::Lower>();
  // Equal factors short-circuit so KL(p, p) is exactly zero; the triangular
  // solve leaves rounding residue on the diagonal.
  const Scalar trace = p.chol == q.chol ? static_cast<Scalar>(d) : Mat(Lq.solve(p.chol)).squaredNorm();
  const Scalar logdet = Scalar(2) * (p.chol.diagonal().array().abs().log().sum() - q.chol.diagonal().array().abs().log().sum());
  const Scalar value = Scalar(0.5) * q.lambda * p.nu * delta.dot(Wp * delta) - Scalar(0.5) * q.nu * logdet +
                       Scalar(0.5) * p.nu * (trace - static_cast<Scalar>(d));
  if (include_constant) return std::max(value, Scalar(0));
  return value;
}

// Gradient of nw_kl(p, q) with respect to p's omega and chol(W).
template <typename Scalar>
void nw_kl_grad(const NormalWishart<Scalar>& p, const NormalWishart<Scalar>& q,
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& d_omega,
                Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& d_chol) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require_same_dim(p.dim(), q.dim(), "nw_kl_grad");
  const Eigen::Index d = p.dim();
  const auto delta = (q.omega - p.omega).eval();
  const Mat Wp = p.W();
  d_omega = -q.lambda * p.nu * (Wp * delta);
  const Mat I = Mat::Identity(d, d);
  const Mat Wp_inv = p.chol.template triangularView<Eigen::Lower>().transpose().solve(
      p.chol.template triangularView<Eigen::Lower>().solve(I));
  const Mat Wq_inv = q.chol.template triangularView<Eigen::Lower>().transpose().solve(
      q.chol.template triangularView<Eigen::Lower>().solve(I));
  const Mat G = Scalar(0.5) * q.lambda * p.nu * delta * delta.transpose() - Scalar(0.5) * q.nu * Wp_inv +
                Scalar(0.5) * p.nu * Wq_inv;
  d_chol = (Scalar(2) * G * p.chol).template triangularView<Eigen::Lower>();
}

}  // namespace hexpert
