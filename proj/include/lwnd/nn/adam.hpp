#pragma once

#include <cmath>

#include "lwnd/nn/types.hpp"

namespace lwnd::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to the gradient
};

template <typename Scalar>
struct AdamState {
  Matrix<Scalar> m, v;
  long step = 0;
};

/// One Adam update of `param` in place; weight decay is skipped when `decay` is false.
template <typename Scalar, typename Derived, typename GradDerived>
void adam_step(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<GradDerived>& grad, AdamState<Scalar>& state,
               const AdamConfig& cfg, bool decay = true) {
  require(param.rows() == grad.rows() && param.cols() == grad.cols(), "adam_step: gradient shape mismatch");
  if (state.m.size() == 0) {
    state.m = Matrix<Scalar>::Zero(grad.rows(), grad.cols());
    state.v = Matrix<Scalar>::Zero(grad.rows(), grad.cols());
  }
  require(state.m.rows() == grad.rows() && state.m.cols() == grad.cols(), "adam_step: state shape mismatch");
  ++state.step;
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  Matrix<Scalar> g = grad.derived();
  if (decay && cfg.weight_decay != 0.0) g += Scalar(cfg.weight_decay) * Matrix<Scalar>(param.derived());
  state.m = b1 * state.m + (Scalar(1) - b1) * g;
  state.v = b2 * state.v + (Scalar(1) - b2) * g.cwiseProduct(g);
  const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg.beta1, double(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg.beta2, double(state.step)));
  const Scalar step = Scalar(cfg.lr) / c1;
  param.derived().array() -=
      step * state.m.array() / ((state.v.array() / c2).sqrt() + Scalar(cfg.eps));
}

}  // namespace lwnd::nn
