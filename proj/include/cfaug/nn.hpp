#pragma once

// Dense building blocks for the recurrent autoencoder: softmax helpers and an
// LSTM layer with an explicit forward cache and a hand-written backward pass.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace cfaug::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vec<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return Vec<Scalar>(e / e.sum());
}

template <typename Derived>
auto log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return Vec<Scalar>(logits.array() - lse);
}

/// Column-wise log-softmax of a (classes x steps) matrix.
template <typename Scalar>
Mat<Scalar> log_softmax_cols(const Mat<Scalar>& logits) {
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.cols(); ++t) out.col(t) = log_softmax(logits.col(t));
  return out;
}

/// Backward of softmax: given p and dL/dp, returns dL/dlogits.
template <typename Scalar>
Vec<Scalar> softmax_backward(const Vec<Scalar>& p, const Vec<Scalar>& dp) {
  return (p.array() * (dp.array() - p.dot(dp))).matrix();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// Cosine similarity and its gradients with respect to both arguments.
template <typename Scalar>
struct CosineGrad {
  Scalar value;
  Vec<Scalar> da;
  Vec<Scalar> db;
};

template <typename Scalar>
CosineGrad<Scalar> cosine_with_grad(const Vec<Scalar>& a, const Vec<Scalar>& b) {
  const Scalar na = a.norm(), nb = b.norm();
  const Scalar c = a.dot(b) / (na * nb);
  return {c, b / (na * nb) - c * a / (na * na), a / (na * nb) - c * b / (nb * nb)};
}

/// Gate layout in stacked matrices: input, forget, cell candidate, output.
template <typename Scalar>
struct LstmWeights {
  Mat<Scalar> w_x;   // 4H x I
  Mat<Scalar> w_h;   // 4H x H
  Mat<Scalar> bias;  // 4H x 1

  Eigen::Index hidden() const { return w_h.cols(); }
  Eigen::Index input() const { return w_x.cols(); }
};

template <typename Scalar>
struct LstmCache {
  Mat<Scalar> x;      // I x T inputs
  Mat<Scalar> h;      // H x (T+1), column 0 is the initial state
  Mat<Scalar> c;      // H x (T+1)
  Mat<Scalar> gates;  // 4H x T post-activation
};

template <typename Scalar>
struct LstmGrads {
  Mat<Scalar> dx;        // I x T
  Vec<Scalar> dh0;
  Vec<Scalar> dc0;
  Vec<Scalar> dpre_sum;  // sum over steps of pre-activation grads
};

/// Applies gate nonlinearities in place to a 4H pre-activation vector.
template <typename Scalar, typename Derived>
void activate_gates(Eigen::MatrixBase<Derived>& g, Eigen::Index H) {
  for (Eigen::Index k = 0; k < H; ++k) {
    g(k) = sigmoid(g(k));
    g(H + k) = sigmoid(g(H + k));
    g(2 * H + k) = std::tanh(g(2 * H + k));
    g(3 * H + k) = sigmoid(g(3 * H + k));
  }
}

/// One recurrent step; `pre` already holds W_x x + bias (+ any constant term).
template <typename Scalar>
void lstm_step(const LstmWeights<Scalar>& w, Vec<Scalar> pre, const Vec<Scalar>& h_prev,
               const Vec<Scalar>& c_prev, Vec<Scalar>& h_out, Vec<Scalar>& c_out,
               Vec<Scalar>* gates_out = nullptr) {
  const Eigen::Index H = w.hidden();
  pre.noalias() += w.w_h * h_prev;
  activate_gates<Scalar>(pre, H);
  c_out = pre.segment(H, H).cwiseProduct(c_prev) +
          pre.segment(0, H).cwiseProduct(pre.segment(2 * H, H));
  h_out = pre.segment(3 * H, H).cwiseProduct(c_out.array().tanh().matrix());
  if (gates_out) *gates_out = std::move(pre);
}

/// Runs the layer over all columns of x. `extra` is added to every step's
/// pre-activation (used to inject a constant conditioning vector).
template <typename Scalar>
LstmCache<Scalar> lstm_forward(const LstmWeights<Scalar>& w, const Mat<Scalar>& x,
                               const Vec<Scalar>& h0, const Vec<Scalar>& c0,
                               const Vec<Scalar>* extra = nullptr) {
  const Eigen::Index H = w.hidden(), T = x.cols();
  LstmCache<Scalar> cache;
  cache.x = x;
  cache.h.resize(H, T + 1);
  cache.c.resize(H, T + 1);
  cache.gates.resize(4 * H, T);
  cache.h.col(0) = h0;
  cache.c.col(0) = c0;
  Mat<Scalar> pre_x = w.w_x * x;
  pre_x.colwise() += w.bias.col(0);
  if (extra) pre_x.colwise() += *extra;
  Vec<Scalar> h, c, g;
  for (Eigen::Index t = 0; t < T; ++t) {
    lstm_step<Scalar>(w, pre_x.col(t), cache.h.col(t), cache.c.col(t), h, c, &g);
    cache.h.col(t + 1) = h;
    cache.c.col(t + 1) = c;
    cache.gates.col(t) = g;
  }
  return cache;
}

/// Backward pass. `dh_out` is dL/dh_t for t = 1..T (H x T). Parameter
/// gradients are accumulated into `grad`.
template <typename Scalar>
LstmGrads<Scalar> lstm_backward(const LstmWeights<Scalar>& w, const LstmCache<Scalar>& cache,
                                const Mat<Scalar>& dh_out, LstmWeights<Scalar>& grad) {
  const Eigen::Index H = w.hidden(), T = cache.x.cols();
  Mat<Scalar> dpre(4 * H, T);
  Vec<Scalar> dh_next = Vec<Scalar>::Zero(H), dc_next = Vec<Scalar>::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto g = cache.gates.col(t);
    const auto i = g.segment(0, H).array();
    const auto f = g.segment(H, H).array();
    const auto gg = g.segment(2 * H, H).array();
    const auto o = g.segment(3 * H, H).array();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> tc = cache.c.col(t + 1).array().tanh();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> dh = (dh_out.col(t) + dh_next).array();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> dc =
        dc_next.array() + dh * o * (Scalar(1) - tc * tc);
    dpre.col(t).segment(0, H) = (dc * gg * i * (Scalar(1) - i)).matrix();
    dpre.col(t).segment(H, H) = (dc * cache.c.col(t).array() * f * (Scalar(1) - f)).matrix();
    dpre.col(t).segment(2 * H, H) = (dc * i * (Scalar(1) - gg * gg)).matrix();
    dpre.col(t).segment(3 * H, H) = (dh * tc * o * (Scalar(1) - o)).matrix();
    dc_next = (dc * f).matrix();
    dh_next.noalias() = w.w_h.transpose() * dpre.col(t);
  }
  LstmGrads<Scalar> out;
  grad.w_x.noalias() += dpre * cache.x.transpose();
  grad.w_h.noalias() += dpre * cache.h.leftCols(T).transpose();
  out.dpre_sum = dpre.rowwise().sum();
  grad.bias.col(0) += out.dpre_sum;
  out.dx.noalias() = w.w_x.transpose() * dpre;
  out.dh0 = dh_next;
  out.dc0 = dc_next;
  return out;
}

template <typename Scalar, typename Rng>
void fill_uniform(Mat<Scalar>& m, Scalar limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(limit),
                                              static_cast<double>(limit));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(dist(rng));
}

}  // namespace cfaug::nn
