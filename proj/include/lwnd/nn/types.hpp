#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

#include "lwnd/errors.hpp"

namespace lwnd::nn {

/// Row-major so that one channel (or one feature) is contiguous across the
/// batch, and weight matrices serialize as [out, in, kh, kw].
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A batch of [channels, height, width] maps stored as a [channels, batch*height*width]
/// matrix; column index is (b*height + h)*width + w.
template <typename Scalar>
struct FeatureMap {
  Matrix<Scalar> values;
  int height = 0;
  int width = 0;

  FeatureMap() = default;
  FeatureMap(int channels, int batch, int h, int w) : values(channels, batch * h * w), height(h), width(w) {
    values.setZero();
  }
  FeatureMap(Matrix<Scalar> v, int h, int w) : values(std::move(v)), height(h), width(w) {}

  int channels() const { return static_cast<int>(values.rows()); }
  int spatial() const { return height * width; }
  int batch() const { return spatial() == 0 ? 0 : static_cast<int>(values.cols()) / spatial(); }

  Scalar& at(int c, int b, int h, int w) { return values(c, (b * height + h) * width + w); }
  Scalar at(int c, int b, int h, int w) const { return values(c, (b * height + h) * width + w); }
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

/// [C, B*H*W] -> [C*H*W, B], feature index c*H*W + h*W + w.
template <typename Scalar>
Matrix<Scalar> flatten(const FeatureMap<Scalar>& x) {
  const int hw = x.spatial();
  const int batch = x.batch();
  Matrix<Scalar> out(x.channels() * hw, batch);
  for (int c = 0; c < x.channels(); ++c)
    for (int s = 0; s < hw; ++s)
      for (int b = 0; b < batch; ++b) out(c * hw + s, b) = x.values(c, b * hw + s);
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> unflatten(const Matrix<Scalar>& flat, int channels, int height, int width) {
  const int hw = height * width;
  require(flat.rows() == channels * hw, "unflatten: feature count does not match shape");
  const int batch = static_cast<int>(flat.cols());
  FeatureMap<Scalar> out(channels, batch, height, width);
  for (int c = 0; c < channels; ++c)
    for (int s = 0; s < hw; ++s)
      for (int b = 0; b < batch; ++b) out.values(c, b * hw + s) = flat(c * hw + s, b);
  return out;
}

}  // namespace lwnd::nn
