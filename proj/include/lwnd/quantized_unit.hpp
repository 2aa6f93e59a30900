#pragma once

#include <cmath>

#include "lwnd/nn/batchnorm.hpp"

namespace lwnd {

/// Inference semantics of one unit (conv channel or dense neuron) of a fully
/// quantized network, as a function of its integer accumulator
/// S = S_P - S_N and an optional binary skip input:
///
///   y = delta * S + bias
///   y = (y - mean) * scale + beta          if normalized
///   fires  <=>  y + skip > 0
///
/// Every step is monotone in S, so for fixed skip the decision is a
/// threshold on S. Both the quantized forward pass and the lowering use this
/// single definition, in double precision.
struct UnitDecision {
  double delta = 1.0;
  double bias = 0.0;
  bool normalized = false;
  double mean = 0.0;
  double scale = 1.0;  // gamma / sqrt(running_var + eps)
  double beta = 0.0;

  double preactivation(long accumulator, int skip = 0) const {
    double y = delta * static_cast<double>(accumulator) + bias;
    if (normalized) y = (y - mean) * scale + beta;
    return y + static_cast<double>(skip);
  }

  bool fires(long accumulator, int skip = 0) const { return preactivation(accumulator, skip) > 0.0; }

  /// +1 if the decision is non-decreasing in S, -1 if non-increasing, 0 if constant.
  int direction() const {
    const double slope = normalized ? delta * scale : delta;
    return slope > 0 ? 1 : (slope < 0 ? -1 : 0);
  }
};

template <typename Scalar>
UnitDecision make_unit_decision(double delta, double bias, const nn::BatchNorm<Scalar>* bn, int channel) {
  UnitDecision u;
  u.delta = delta;
  u.bias = bias;
  if (bn) {
    u.normalized = true;
    u.mean = static_cast<double>(bn->running_mean(channel));
    u.scale = static_cast<double>(bn->gamma(channel)) /
              std::sqrt(static_cast<double>(bn->running_var(channel)) + static_cast<double>(bn->eps));
    u.beta = static_cast<double>(bn->beta(channel));
  }
  return u;
}

/// Two-way output of a quantized network as a function of A = S_real - S_random:
/// the logit margin is delta * A + (bias_real - bias_random) and the score is
/// the softmax probability of "real".
struct OutputDecision {
  double delta = 1.0;
  double bias_diff = 0.0;
  double threshold = 0.505;

  double margin(long a) const { return delta * static_cast<double>(a) + bias_diff; }
  double score(long a) const { return 1.0 / (1.0 + std::exp(-margin(a))); }
  bool real(long a) const { return score(a) >= threshold; }
};

/// Softmax probability of class 1 for a two-logit output.
inline double real_probability(double logit_random, double logit_real) {
  return 1.0 / (1.0 + std::exp(-(logit_real - logit_random)));
}

}  // namespace lwnd
