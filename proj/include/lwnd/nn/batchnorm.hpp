#pragma once

#include <cmath>

#include "lwnd/nn/types.hpp"

namespace lwnd::nn {

/// Per-row (channel or feature) batch normalization over all columns.
template <typename Scalar>
struct BatchNorm {
  Vector<Scalar> gamma, beta, running_mean, running_var;
  Scalar eps = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);

  BatchNorm() = default;
  explicit BatchNorm(int channels)
      : gamma(Vector<Scalar>::Ones(channels)),
        beta(Vector<Scalar>::Zero(channels)),
        running_mean(Vector<Scalar>::Zero(channels)),
        running_var(Vector<Scalar>::Ones(channels)) {}

  int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename Scalar>
struct BatchNormCache {
  Matrix<Scalar> normalized;
  Vector<Scalar> inv_std;
};

template <typename Scalar>
struct BatchNormGrads {
  Matrix<Scalar> input;
  Vector<Scalar> gamma, beta;
};

/// Training mode: normalizes with batch statistics and folds them into the
/// running estimates (unbiased variance).
template <typename Scalar>
Matrix<Scalar> batchnorm_forward_train(BatchNorm<Scalar>& bn, const Matrix<Scalar>& x, BatchNormCache<Scalar>* cache) {
  require(x.rows() == bn.channels(), "batchnorm: channel count mismatch");
  const Eigen::Index n = x.cols();
  require(n >= 2, "batchnorm: training mode needs at least 2 values per channel");
  const Vector<Scalar> mean = x.rowwise().mean();
  Matrix<Scalar> centered = x.colwise() - mean;
  const Vector<Scalar> var = centered.array().square().rowwise().mean();
  const Vector<Scalar> inv_std = (var.array() + bn.eps).rsqrt();
  Matrix<Scalar> normalized = inv_std.asDiagonal() * centered;
  Matrix<Scalar> y = (bn.gamma.asDiagonal() * normalized).colwise() + bn.beta;

  const Scalar unbias = Scalar(n) / Scalar(n - 1);
  bn.running_mean = (Scalar(1) - bn.momentum) * bn.running_mean + bn.momentum * mean;
  bn.running_var = (Scalar(1) - bn.momentum) * bn.running_var + (bn.momentum * unbias) * var;

  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> batchnorm_forward_infer(const BatchNorm<Scalar>& bn, const Matrix<Scalar>& x) {
  require(x.rows() == bn.channels(), "batchnorm: channel count mismatch");
  const Vector<Scalar> scale = bn.gamma.array() * (bn.running_var.array() + bn.eps).rsqrt();
  const Vector<Scalar> shift = bn.beta.array() - scale.array() * bn.running_mean.array();
  return (scale.asDiagonal() * x).colwise() + shift;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNorm<Scalar>& bn, const BatchNormCache<Scalar>& cache,
                                          const Matrix<Scalar>& grad_out) {
  require(grad_out.rows() == cache.normalized.rows() && grad_out.cols() == cache.normalized.cols(),
          "batchnorm_backward: grad_out shape mismatch");
  const Scalar n = Scalar(grad_out.cols());
  BatchNormGrads<Scalar> g;
  g.beta = grad_out.rowwise().sum();
  g.gamma = grad_out.cwiseProduct(cache.normalized).rowwise().sum();
  const Vector<Scalar> k = (bn.gamma.array() * cache.inv_std.array()) / n;
  Matrix<Scalar> t = (grad_out * n).colwise() - g.beta;
  t -= g.gamma.asDiagonal() * cache.normalized;
  g.input = k.asDiagonal() * t;
  return g;
}

}  // namespace lwnd::nn
