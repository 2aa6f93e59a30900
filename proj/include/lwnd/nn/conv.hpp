#pragma once

#include "lwnd/nn/types.hpp"

namespace lwnd::nn {

/// Stride-1 2-D convolution without bias. weight is [out, in*kernel*kernel]
/// with column index (c*kernel + k1)*kernel + k2.
template <typename Scalar>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int padding = 0;
  Matrix<Scalar> weight;

  Conv2d() = default;
  Conv2d(int in, int out, int k, int pad) : in_channels(in), out_channels(out), kernel(k), padding(pad) {
    weight = Matrix<Scalar>::Zero(out, in * k * k);
  }

  int fan_in() const { return in_channels * kernel * kernel; }
  int out_height(int h) const { return h + 2 * padding - kernel + 1; }
  int out_width(int w) const { return w + 2 * padding - kernel + 1; }
};

template <typename Scalar>
struct ConvGrads {
  Matrix<Scalar> weight;
  FeatureMap<Scalar> input;
};

/// Unfolds every receptive field into a column: [in*k*k, batch*H'*W'].
template <typename Scalar>
Matrix<Scalar> im2col(const FeatureMap<Scalar>& x, int kernel, int padding) {
  const int h = x.height, w = x.width, batch = x.batch();
  const int oh = h + 2 * padding - kernel + 1, ow = w + 2 * padding - kernel + 1;
  require(oh > 0 && ow > 0, "im2col: kernel larger than padded input");
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(x.channels() * kernel * kernel, batch * oh * ow);
  for (int c = 0; c < x.channels(); ++c)
    for (int k1 = 0; k1 < kernel; ++k1)
      for (int k2 = 0; k2 < kernel; ++k2) {
        auto row = cols.row((c * kernel + k1) * kernel + k2);
        for (int b = 0; b < batch; ++b)
          for (int i = 0; i < oh; ++i) {
            const int ii = i + k1 - padding;
            if (ii < 0 || ii >= h) continue;
            const int j0 = std::max(0, padding - k2), j1 = std::min(ow, w + padding - k2);
            for (int j = j0; j < j1; ++j) row((b * oh + i) * ow + j) = x.values(c, (b * h + ii) * w + j + k2 - padding);
          }
      }
  return cols;
}

/// Adjoint of im2col: scatters column gradients back onto the input map.
template <typename Scalar>
FeatureMap<Scalar> col2im(const Matrix<Scalar>& cols, int channels, int height, int width, int kernel, int padding) {
  const int oh = height + 2 * padding - kernel + 1, ow = width + 2 * padding - kernel + 1;
  const int batch = static_cast<int>(cols.cols()) / (oh * ow);
  FeatureMap<Scalar> x(channels, batch, height, width);
  for (int c = 0; c < channels; ++c)
    for (int k1 = 0; k1 < kernel; ++k1)
      for (int k2 = 0; k2 < kernel; ++k2) {
        auto row = cols.row((c * kernel + k1) * kernel + k2);
        for (int b = 0; b < batch; ++b)
          for (int i = 0; i < oh; ++i) {
            const int ii = i + k1 - padding;
            if (ii < 0 || ii >= height) continue;
            const int j0 = std::max(0, padding - k2), j1 = std::min(ow, width + padding - k2);
            for (int j = j0; j < j1; ++j)
              x.values(c, (b * height + ii) * width + j + k2 - padding) += row((b * oh + i) * ow + j);
          }
      }
  return x;
}

template <typename Scalar>
FeatureMap<Scalar> conv2d_forward(const Conv2d<Scalar>& layer, const FeatureMap<Scalar>& x) {
  require(x.channels() == layer.in_channels, "conv2d_forward: input has " + std::to_string(x.channels()) +
                                                 " channels, layer expects " + std::to_string(layer.in_channels));
  require(layer.weight.rows() == layer.out_channels && layer.weight.cols() == layer.fan_in(),
          "conv2d_forward: weight shape does not match layer geometry");
  const int oh = layer.out_height(x.height), ow = layer.out_width(x.width);
  if (layer.kernel == 1 && layer.padding == 0) return FeatureMap<Scalar>(layer.weight * x.values, oh, ow);
  return FeatureMap<Scalar>(layer.weight * im2col(x, layer.kernel, layer.padding), oh, ow);
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Conv2d<Scalar>& layer, const FeatureMap<Scalar>& x,
                                  const FeatureMap<Scalar>& grad_out) {
  require(x.channels() == layer.in_channels, "conv2d_backward: input channel mismatch");
  require(grad_out.channels() == layer.out_channels && grad_out.height == layer.out_height(x.height) &&
              grad_out.width == layer.out_width(x.width) && grad_out.batch() == x.batch(),
          "conv2d_backward: grad_out shape mismatch");
  ConvGrads<Scalar> g;
  if (layer.kernel == 1 && layer.padding == 0) {
    g.weight = grad_out.values * x.values.transpose();
    g.input = FeatureMap<Scalar>(layer.weight.transpose() * grad_out.values, x.height, x.width);
    return g;
  }
  const Matrix<Scalar> cols = im2col(x, layer.kernel, layer.padding);
  g.weight = grad_out.values * cols.transpose();
  const Matrix<Scalar> grad_cols = layer.weight.transpose() * grad_out.values;
  g.input = col2im(grad_cols, layer.in_channels, x.height, x.width, layer.kernel, layer.padding);
  return g;
}

}  // namespace lwnd::nn
