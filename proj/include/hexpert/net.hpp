#pragma once

// Small dense networks with hand-written backpropagation, plus an Adam
// optimizer. Enough for linear experts, shallow MLPs and the softmax /
// diagonal-Gaussian heads used by every learner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hexpert/distrib.hpp"
#include "hexpert/rng.hpp"

namespace hexpert {

enum class Activation { Tanh, Relu };
enum class Head { Softmax, Gaussian, Identity };

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }
inline const char* to_string(Head h) {
  switch (h) {
    case Head::Softmax: return "softmax";
    case Head::Gaussian: return "gaussian";
    default: return "identity";
  }
}

template <typename Scalar>
struct DenseLayer {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> W;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b;
};

// Per-layer parameter-shaped buffers (gradients, optimizer moments).
template <typename Scalar>
using ParamSet = std::vector<DenseLayer<Scalar>>;

// Activations recorded by a forward pass; reused across calls.
template <typename Scalar>
struct Tape {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec input;
  std::vector<Vec> hidden;  // post-activation of each hidden layer
  Vec raw;                  // final affine output (logits / mean+logstd / value)
  Vec delta;                // scratch for backward
  Vec delta_next;
};

template <typename Scalar>
class Net {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Net() = default;

  // sizes = {input, hidden..., raw output}. For a Gaussian head the raw
  // output holds the mean followed by the log-stddev, so its size is even.
  Net(std::vector<int> sizes, Activation act, Head head) : sizes_(std::move(sizes)), act_(act), head_(head) {
    if (sizes_.size() < 2) throw std::invalid_argument("Net needs at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw std::invalid_argument("Net layer sizes must be positive");
    if (head_ == Head::Gaussian && sizes_.back() % 2 != 0)
      throw std::invalid_argument("Gaussian head needs an even raw output size");
    layers_.resize(sizes_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].W = Mat::Zero(sizes_[l + 1], sizes_[l]);
      layers_[l].b = Vec::Zero(sizes_[l + 1]);
    }
  }

  // Glorot-uniform weights, zero biases.
  Net(std::vector<int> sizes, Activation act, Head head, Rng& rng) : Net(std::move(sizes), act, head) {
    for (auto& layer : layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.W.rows() + layer.W.cols()));
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
          layer.W(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
  }

  int input_dim() const { return sizes_.front(); }
  int raw_dim() const { return sizes_.back(); }
  int output_dim() const { return head_ == Head::Gaussian ? sizes_.back() / 2 : sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  Head head() const { return head_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
  }

  ParamSet<Scalar> zeros_like() const {
    ParamSet<Scalar> g(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      g[l].W = Mat::Zero(layers_[l].W.rows(), layers_[l].W.cols());
      g[l].b = Vec::Zero(layers_[l].b.size());
    }
    return g;
  }

  // Runs the affine stack; returns the raw (pre-head) output stored in tape.
  template <typename Derived>
  const Vec& forward(const Eigen::MatrixBase<Derived>& x, Tape<Scalar>& tape) const {
    if (x.size() != input_dim())
      throw DimensionMismatch("Net::forward: input " + std::to_string(x.size()) + " vs " +
                              std::to_string(input_dim()));
    tape.input = x;
    tape.hidden.resize(layers_.size() - 1);
    const Vec* a = &tape.input;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      Vec& h = tape.hidden[l];
      h.noalias() = layers_[l].W * (*a);
      h += layers_[l].b;
      if (act_ == Activation::Tanh)
        h = h.array().tanh();
      else
        h = h.array().max(Scalar(0));
      a = &h;
    }
    tape.raw.noalias() = layers_.back().W * (*a);
    tape.raw += layers_.back().b;
    return tape.raw;
  }

  // Accumulates d(loss)/d(params) into grads given d(loss)/d(raw output).
  template <typename Derived>
  void backward(Tape<Scalar>& tape, const Eigen::MatrixBase<Derived>& grad_raw, ParamSet<Scalar>& grads) const {
    if (grad_raw.size() != raw_dim()) throw DimensionMismatch("Net::backward: upstream gradient shape");
    if (grads.size() != layers_.size()) throw DimensionMismatch("Net::backward: gradient buffer shape");
    auto& delta = tape.delta;
    auto& next = tape.delta_next;
    delta = grad_raw;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Vec& a_in = l == 0 ? tape.input : tape.hidden[l - 1];
      grads[l].W.noalias() += delta * a_in.transpose();
      grads[l].b += delta;
      if (l == 0) break;
      next.noalias() = layers_[l].W.transpose() * delta;
      const Vec& h = tape.hidden[l - 1];
      if (act_ == Activation::Tanh)
        next.array() *= (Scalar(1) - h.array().square());
      else
        next.array() *= (h.array() > Scalar(0)).template cast<Scalar>();
      delta.swap(next);
    }
  }

  std::vector<Scalar> flat() const {
    std::vector<Scalar> out;
    out.reserve(num_params());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
      out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return out;
  }

  void set_flat(const std::vector<Scalar>& values) {
    if (values.size() != num_params()) throw DimensionMismatch("Net::set_flat: parameter count");
    std::size_t k = 0;
    for (auto& l : layers_) {
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(k), l.W.size(), l.W.data());
      k += static_cast<std::size_t>(l.W.size());
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(k), l.b.size(), l.b.data());
      k += static_cast<std::size_t>(l.b.size());
    }
  }

 private:
  std::vector<int> sizes_;
  Activation act_ = Activation::Tanh;
  Head head_ = Head::Identity;
  std::vector<DenseLayer<Scalar>> layers_;
};

using NetD = Net<double>;
using TapeD = Tape<double>;
using ParamSetD = ParamSet<double>;

template <typename Scalar>
void set_zero(ParamSet<Scalar>& g) {
  for (auto& l : g) {
    l.W.setZero();
    l.b.setZero();
  }
}

template <typename Scalar>
void scale(ParamSet<Scalar>& g, Scalar s) {
  for (auto& l : g) {
    l.W *= s;
    l.b *= s;
  }
}

// ---------------------------------------------------------------- heads

template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& z) {
  const double mx = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - mx).exp();
  return e / e.sum();
}

// Softmax head output as a Simplex. Renormalized so the result always meets
// the Simplex tolerance.
template <typename Derived>
Simplex softmax_simplex(const Eigen::MatrixBase<Derived>& z) {
  return Simplex(softmax(z));
}

// d(loss)/d(logits) from d(loss)/d(probs).
inline Eigen::VectorXd softmax_backward(const Eigen::VectorXd& probs, const Eigen::VectorXd& grad_probs) {
  return (probs.array() * (grad_probs.array() - probs.dot(grad_probs))).matrix();
}

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;  // clamped to [kLogStdMin, kLogStdMax]
};

template <typename Derived>
GaussianParams gaussian_head(const Eigen::MatrixBase<Derived>& raw) {
  const Eigen::Index d = raw.size() / 2;
  GaussianParams g;
  g.mean = raw.head(d);
  g.log_std = raw.tail(d).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return g;
}

// d(loss)/d(raw) from gradients w.r.t. (mean, log_std). The clamp passes no
// gradient outside its range.
template <typename Derived>
Eigen::VectorXd gaussian_head_backward(const Eigen::MatrixBase<Derived>& raw, const Eigen::VectorXd& grad_mean,
                                       const Eigen::VectorXd& grad_log_std) {
  const Eigen::Index d = raw.size() / 2;
  Eigen::VectorXd g(raw.size());
  g.head(d) = grad_mean;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double s = raw(d + i);
    g(d + i) = (s >= kLogStdMin && s <= kLogStdMax) ? grad_log_std(i) : 0.0;
  }
  return g;
}

// Reparameterized draw a = mean + exp(log_std) * eps, eps ~ N(0, I).
inline Eigen::VectorXd gaussian_sample(const GaussianParams& p, Rng& rng) {
  Eigen::VectorXd a(p.mean.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = p.mean(i) + std::exp(p.log_std(i)) * rng.normal();
  return a;
}

inline double gaussian_log_prob(const GaussianParams& p, const Eigen::VectorXd& a) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double z = (a(i) - p.mean(i)) * std::exp(-p.log_std(i));
    lp += -half_log_2pi - p.log_std(i) - 0.5 * z * z;
  }
  return lp;
}

// Gradient of gaussian_log_prob w.r.t. (mean, log_std).
inline void gaussian_log_prob_grad(const GaussianParams& p, const Eigen::VectorXd& a, Eigen::VectorXd& grad_mean,
                                   Eigen::VectorXd& grad_log_std) {
  const Eigen::Index d = a.size();
  grad_mean.resize(d);
  grad_log_std.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double inv_var = std::exp(-2.0 * p.log_std(i));
    const double diff = a(i) - p.mean(i);
    grad_mean(i) = diff * inv_var;
    grad_log_std(i) = diff * diff * inv_var - 1.0;
  }
}

// Closed-form KL between diagonal Gaussians, KL(p || q).
inline double gaussian_kl(const Eigen::VectorXd& mean_p, const Eigen::VectorXd& log_std_p,
                          const Eigen::VectorXd& mean_q, const Eigen::VectorXd& log_std_q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mean_p.size(); ++i) {
    const double vr = std::exp(2.0 * (log_std_p(i) - log_std_q(i)));
    const double dm = (mean_p(i) - mean_q(i)) * std::exp(-log_std_q(i));
    kl += 0.5 * (vr + dm * dm - 1.0) - (log_std_p(i) - log_std_q(i));
  }
  return kl;
}

// Gradient of gaussian_kl w.r.t. (mean_p, log_std_p).
inline void gaussian_kl_grad(const Eigen::VectorXd& mean_p, const Eigen::VectorXd& log_std_p,
                             const Eigen::VectorXd& mean_q, const Eigen::VectorXd& log_std_q,
                             Eigen::VectorXd& grad_mean, Eigen::VectorXd& grad_log_std) {
  const Eigen::Index d = mean_p.size();
  grad_mean.resize(d);
  grad_log_std.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double inv_vq = std::exp(-2.0 * log_std_q(i));
    grad_mean(i) = (mean_p(i) - mean_q(i)) * inv_vq;
    grad_log_std(i) = std::exp(2.0 * log_std_p(i)) * inv_vq - 1.0;
  }
}

// Huber loss of a residual r and its derivative.
inline double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

inline double huber_grad(double r, double delta) { return std::clamp(r, -delta, delta); }

// ------------------------------------------------------------- optimizer

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const Net<Scalar>& net, AdamConfig cfg) : cfg_(cfg), m_(net.zeros_like()), v_(net.zeros_like()) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be > 0");
    if (!(cfg_.beta1 > 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 > 0.0 && cfg_.beta2 < 1.0))
      throw std::invalid_argument("Adam: decay rates must lie in (0,1)");
  }

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Descent step on the loss whose gradient is grads. Throws
  // NonFiniteGradient and leaves the net and the moments untouched when any
  // gradient entry is NaN or infinite.
  void step(Net<Scalar>& net, const ParamSet<Scalar>& grads) {
    for (const auto& g : grads)
      if (!g.W.allFinite() || !g.b.allFinite()) throw NonFiniteGradient("non-finite gradient; update skipped");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Scalar a = static_cast<Scalar>(cfg_.lr * std::sqrt(c2) / c1);
    const Scalar eps_hat = static_cast<Scalar>(cfg_.eps * std::sqrt(c2));
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].W, grads[l].W, m_[l].W, v_[l].W, a, eps_hat);
      update(layers[l].b, grads[l].b, m_[l].b, v_[l].b, a, eps_hat);
    }
  }

 private:
  template <typename P, typename G>
  void update(P& p, const G& g, G& m, G& v, Scalar a, Scalar eps_hat) {
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    p.array() -= a * m.array() / (v.array().sqrt() + eps_hat);
  }

  AdamConfig cfg_;
  ParamSet<Scalar> m_;
  ParamSet<Scalar> v_;
  long t_ = 0;
};

using AdamD = Adam<double>;

// Adam over a flat parameter vector, for parameter blocks that are not nets.
template <typename Scalar>
class VectorAdam {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VectorAdam() = default;
  VectorAdam(Eigen::Index size, AdamConfig cfg) : cfg_(cfg), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be > 0");
  }

  long steps() const { return t_; }

  // Descent step; same guard as Adam::step.
  void step(Eigen::Ref<Vec> params, const Vec& grad) {
    if (grad.size() != params.size() || grad.size() != m_.size()) throw DimensionMismatch("VectorAdam: shape");
    if (!grad.allFinite()) throw NonFiniteGradient("non-finite gradient; update skipped");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Scalar a = static_cast<Scalar>(cfg_.lr * std::sqrt(c2) / c1);
    const Scalar eps_hat = static_cast<Scalar>(cfg_.eps * std::sqrt(c2));
    m_ = Scalar(cfg_.beta1) * m_ + Scalar(1.0 - cfg_.beta1) * grad;
    v_.array() = Scalar(cfg_.beta2) * v_.array() + Scalar(1.0 - cfg_.beta2) * grad.array().square();
    params.array() -= a * m_.array() / (v_.array().sqrt() + eps_hat);
  }

 private:
  AdamConfig cfg_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

}  // namespace hexpert
