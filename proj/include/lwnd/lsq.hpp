#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "lwnd/nn/types.hpp"

namespace lwnd::lsq {

using nn::Matrix;

/// Training stages: full precision, ternary weights, ternary weights plus
/// binary activations.
enum class QuantStage { FullPrecision = 0, Weights = 1, Full = 2 };

inline std::string to_string(QuantStage stage) {
  switch (stage) {
    case QuantStage::FullPrecision: return "fp";
    case QuantStage::Weights: return "weights";
    case QuantStage::Full: return "full";
  }
  return "fp";
}

inline QuantStage parse_stage(const std::string& name) {
  if (name == "fp") return QuantStage::FullPrecision;
  if (name == "weights") return QuantStage::Weights;
  if (name == "full") return QuantStage::Full;
  throw ValidationError("unknown quantization stage '" + name + "' (expected fp|weights|full)");
}

struct QuantConfig {
  int bit_width = 1;
  bool activation_binarization = true;
  /// Multiplier on the step-size gradient; <= 0 selects 1/sqrt(N_w * Q_p).
  double grad_scale = 0.0;
};

struct QuantSchedule {
  int warmup_epochs = 0;
  int weight_quant_epochs = 0;
  int act_quant_epochs = 0;

  int total_epochs() const { return warmup_epochs + weight_quant_epochs + act_quant_epochs; }

  QuantStage stage_for_epoch(int epoch) const {
    if (epoch < warmup_epochs) return QuantStage::FullPrecision;
    if (epoch < warmup_epochs + weight_quant_epochs) return QuantStage::Weights;
    return QuantStage::Full;
  }
};

/// Positive and negative clip levels for the ternary case.
constexpr int kQn = 1;
constexpr int kQp = 1;

/// Ternary code clip(round(w / delta), -1, 1), ties rounded away from zero.
template <typename Scalar>
int ternary_code(Scalar w, Scalar delta) {
  const Scalar r = std::round(w / delta);
  return r > Scalar(0) ? 1 : (r < Scalar(0) ? -1 : 0);
}

/// clip(round(w / delta) * delta, -delta, delta). Only k = 1 is supported.
template <typename Scalar>
Matrix<Scalar> quantize_weights(const Matrix<Scalar>& w, Scalar delta, int bit_width = 1) {
  nn::require(bit_width == 1, "quantize_weights: only ternary (k = 1) quantization is supported");
  nn::require(delta > Scalar(0), "quantize_weights: step size must be positive");
  return w.unaryExpr([delta](Scalar v) { return Scalar(ternary_code(v, delta)) * delta; });
}

template <typename Scalar>
Matrix<Scalar> ternary_codes(const Matrix<Scalar>& w, Scalar delta) {
  nn::require(delta > Scalar(0), "ternary_codes: step size must be positive");
  return w.unaryExpr([delta](Scalar v) { return Scalar(ternary_code(v, delta)); });
}

/// Straight-through estimator: the quantizer's Jacobian is taken as identity.
template <typename Scalar>
Matrix<Scalar> ste_weight_grad(const Matrix<Scalar>& grad_wrt_quantized) {
  return grad_wrt_quantized;
}

/// LSQ step-size gradient: per element -w/delta + round(w/delta) inside the
/// clip range, -Q_n / +Q_p when saturated, times the incoming gradient, summed
/// and scaled by grad_scale.
template <typename Scalar>
Scalar step_size_grad(const Matrix<Scalar>& w, Scalar delta, const Matrix<Scalar>& grad_wrt_quantized,
                      Scalar grad_scale) {
  nn::require(delta > Scalar(0), "step_size_grad: step size must be positive");
  nn::require(w.rows() == grad_wrt_quantized.rows() && w.cols() == grad_wrt_quantized.cols(),
              "step_size_grad: gradient shape mismatch");
  double total = 0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const Scalar v = w(i, j) / delta;
      Scalar d;
      if (v <= Scalar(-kQn)) {
        d = Scalar(-kQn);
      } else if (v >= Scalar(kQp)) {
        d = Scalar(kQp);
      } else {
        d = -v + std::round(v);
      }
      total += static_cast<double>(d * grad_wrt_quantized(i, j));
    }
  return static_cast<Scalar>(total) * grad_scale;
}

template <typename Scalar>
Scalar initial_step_size(const Matrix<Scalar>& w) {
  const Scalar mean_abs = w.size() == 0 ? Scalar(0) : w.cwiseAbs().mean();
  const Scalar delta = Scalar(2) * mean_abs / std::sqrt(Scalar(kQp));
  return delta > Scalar(0) ? delta : Scalar(1e-3);
}

inline double default_grad_scale(std::size_t weight_count) {
  return 1.0 / std::sqrt(static_cast<double>(weight_count) * kQp);
}

/// Smallest admissible step size; applied after every update.
template <typename Scalar>
Scalar project_step_size(Scalar delta) {
  return std::max(delta, Scalar(1e-6));
}

/// Forward indicator(x > 0).
template <typename Scalar>
Matrix<Scalar> binarize_activation(const Matrix<Scalar>& x) {
  return (x.array() > Scalar(0)).template cast<Scalar>().matrix();
}

/// Straight-through gradient restricted to the window |x| <= 1.
template <typename Scalar>
Matrix<Scalar> binarize_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out) {
  return (x.array().abs() <= Scalar(1)).select(grad_out, Scalar(0));
}

enum class LayerKind { Conv, Dense };

/// Extracted ternary codes of one layer plus the step size needed to fold
/// the following normalization. codes is [out, fan_in], entries in {-1,0,1}.
struct TernaryLayer {
  LayerKind kind = LayerKind::Dense;
  int in_channels = 0;  // dense: input features
  int kernel = 1;
  int padding = 0;
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> codes;
  double scale = 0.0;

  int out_channels() const { return static_cast<int>(codes.rows()); }
  int fan_in() const { return static_cast<int>(codes.cols()); }
  long nonzeros() const { return static_cast<long>((codes.array() != 0).count()); }
  bool dead() const { return nonzeros() == 0; }
};

/// Rejects a layer without a step size (not trained under quantization).
template <typename Scalar>
TernaryLayer extract_ternary(const Matrix<Scalar>& weight, Scalar delta, LayerKind kind, int in_channels, int kernel,
                             int padding) {
  if (!(delta > Scalar(0))) throw ValidationError("extract_ternary: layer is not quantized (no step size)");
  nn::require(weight.cols() == in_channels * kernel * kernel, "extract_ternary: geometry does not match weight shape");
  TernaryLayer t;
  t.kind = kind;
  t.in_channels = in_channels;
  t.kernel = kernel;
  t.padding = padding;
  t.scale = static_cast<double>(delta);
  t.codes = weight.unaryExpr([delta](Scalar v) { return static_cast<std::int8_t>(ternary_code(v, delta)); });
  return t;
}

/// Shannon entropy in bits of the empirical code distribution.
template <typename Derived>
double code_entropy_bits(const Eigen::MatrixBase<Derived>& codes) {
  std::array<double, 3> counts{};
  for (Eigen::Index i = 0; i < codes.rows(); ++i)
    for (Eigen::Index j = 0; j < codes.cols(); ++j) counts[static_cast<std::size_t>(int(codes(i, j)) + 1)] += 1;
  const double n = counts[0] + counts[1] + counts[2];
  double h = 0;
  for (double c : counts)
    if (c > 0) h -= (c / n) * std::log2(c / n);
  return h;
}

}  // namespace lwnd::lsq
