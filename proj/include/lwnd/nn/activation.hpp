#pragma once

#include <cmath>
#include <vector>

#include "lwnd/nn/types.hpp"

namespace lwnd::nn {

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out) {
  return (x.array() > Scalar(0)).select(grad_out, Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& x) {
  return (Scalar(1) + (-x.array()).exp()).inverse().matrix();
}

template <typename Scalar>
Matrix<Scalar> sigmoid_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out) {
  const auto s = sigmoid(x).array();
  return (grad_out.array() * s * (Scalar(1) - s)).matrix();
}

/// Column-wise softmax of logits [classes, batch].
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> e = logits.rowwise() - logits.colwise().maxCoeff();
  e = e.array().exp().matrix();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> denom = e.colwise().sum();
  for (Eigen::Index j = 0; j < e.cols(); ++j) e.col(j) /= denom(j);
  return e;
}

template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Matrix<Scalar> grad;  // d(mean loss)/d(logits)
};

/// Mean binary cross-entropy of the softmax probability of class 1 ("real")
/// against 0/1 targets. Equals two-class softmax cross-entropy.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits, const std::vector<int>& targets) {
  require(logits.rows() == 2, "softmax_cross_entropy: expects 2 logits per sample");
  require(static_cast<std::size_t>(logits.cols()) == targets.size(), "softmax_cross_entropy: target count mismatch");
  const Matrix<Scalar> p = softmax(logits);
  LossResult<Scalar> r;
  r.grad = p;
  const Scalar inv_n = Scalar(1) / Scalar(logits.cols());
  double total = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int t = targets[static_cast<std::size_t>(j)];
    // log-softmax directly from logits keeps saturated samples finite.
    const Scalar m = logits.col(j).maxCoeff();
    const Scalar lse = m + std::log(std::exp(logits(0, j) - m) + std::exp(logits(1, j) - m));
    total += static_cast<double>(lse - logits(t, j));
    r.grad(t, j) -= Scalar(1);
  }
  r.grad *= inv_n;
  r.value = static_cast<Scalar>(total) * inv_n;
  return r;
}

}  // namespace lwnd::nn
