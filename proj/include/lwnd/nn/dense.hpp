#pragma once

#include "lwnd/nn/types.hpp"

namespace lwnd::nn {

/// Fully connected layer over column-per-sample activations [in, batch].
template <typename Scalar>
struct Dense {
  Matrix<Scalar> weight;  // [out, in]
  Vector<Scalar> bias;    // [out]

  Dense() = default;
  Dense(int in, int out) : weight(Matrix<Scalar>::Zero(out, in)), bias(Vector<Scalar>::Zero(out)) {}

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }
};

template <typename Scalar>
struct DenseGrads {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
  Matrix<Scalar> input;
};

template <typename Scalar>
Matrix<Scalar> dense_forward(const Dense<Scalar>& layer, const Matrix<Scalar>& x) {
  require(x.rows() == layer.in_features(), "dense_forward: expected " + std::to_string(layer.in_features()) +
                                               " input features, got " + std::to_string(x.rows()));
  Matrix<Scalar> y = layer.weight * x;
  y.colwise() += layer.bias;
  return y;
}

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Dense<Scalar>& layer, const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out) {
  require(x.rows() == layer.in_features() && grad_out.rows() == layer.out_features() && grad_out.cols() == x.cols(),
          "dense_backward: shape mismatch");
  return {grad_out * x.transpose(), grad_out.rowwise().sum(), layer.weight.transpose() * grad_out};
}

}  // namespace lwnd::nn
