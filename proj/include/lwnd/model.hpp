#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lwnd/dataset.hpp"
#include "lwnd/lsq.hpp"
#include "lwnd/nn/activation.hpp"
#include "lwnd/nn/batchnorm.hpp"
#include "lwnd/nn/conv.hpp"
#include "lwnd/nn/dense.hpp"
#include "lwnd/quantized_unit.hpp"

namespace lwnd {

enum class HiddenActivation { Relu, Sigmoid };

struct ModelConfig {
  int group_size = 8;
  int channels = 32;
  int residual_blocks = 1;
  std::vector<int> dense_sizes{64, 64};
  double decision_threshold = 0.505;
  /// Batch normalization after each hidden dense layer.
  bool head_batchnorm = true;
  /// Activation of the hidden dense layers before binarization is enabled.
  HiddenActivation head_activation = HiddenActivation::Relu;

  static constexpr int kInputChannels = 4;
  static constexpr int kInputHeight = 16;

  int spatial() const { return kInputHeight * group_size; }
  int flatten_width() const { return channels * spatial(); }
  void validate() const;
};

template <typename Scalar>
struct ConvUnit {
  nn::Conv2d<Scalar> conv;
  nn::BatchNorm<Scalar> bn;
  Scalar delta = 0;  // 0 until quantization is enabled
};

template <typename Scalar>
struct DenseUnit {
  nn::Dense<Scalar> dense;
  nn::BatchNorm<Scalar> bn;
  bool has_bn = false;
  Scalar delta = 0;
};

/// Named view of one trainable tensor.
template <typename Scalar>
struct ParamRef {
  std::string name;
  Scalar* data;
  Eigen::Index rows, cols;
  bool decay;  // subject to weight decay
  Eigen::Map<nn::Matrix<Scalar>> map() const { return {data, rows, cols}; }
};

/// Binary activations of every quantized layer for one batch, computed on
/// the exact integer path. planes[l] is the output of quantized layer l.
struct QuantizedTrace {
  std::vector<nn::Matrix<float>> planes;
  std::vector<long> output_accumulator;  // S_real - S_random per sample
  std::vector<double> scores;
};

/// Gohr-style distinguisher: 1x1 stem conv, residual blocks of two 3x3
/// convs, dense head, two-way output. Every conv is followed by batch norm.
template <typename Scalar>
class Model {
 public:
  using Matrix = nn::Matrix<Scalar>;
  using FeatureMap = nn::FeatureMap<Scalar>;

  ModelConfig config;
  lsq::QuantStage stage = lsq::QuantStage::FullPrecision;
  ConvUnit<Scalar> stem;
  std::vector<std::array<ConvUnit<Scalar>, 2>> blocks;
  std::vector<DenseUnit<Scalar>> head;
  DenseUnit<Scalar> output;

  /// He-initialized model; the output rows are initialized as negations of
  /// each other (an invariant Adam and the quantizer preserve).
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  /// Same architecture with every tensor zeroed; used as a gradient buffer.
  Model zeros_like() const;

  template <typename Other>
  Model<Other> cast() const;

  std::vector<ParamRef<Scalar>> parameters();
  /// Parameters followed by batch-norm running statistics.
  std::vector<ParamRef<Scalar>> tensors();

  /// Switches stage; entering a quantized stage initializes missing step sizes.
  void set_stage(lsq::QuantStage next);

  /// Logits [2, batch] in inference mode (running statistics), floating path.
  Matrix logits(const FeatureMap& x) const;

  /// Probability of "real" per sample. In the Full stage this is the exact
  /// integer path shared with the lowered program.
  std::vector<double> scores(const FeatureMap& x) const;

  /// Exact quantized forward pass; requires the Full stage.
  QuantizedTrace quantized_trace(const FeatureMap& x) const;

  /// Training-mode forward and backward. Accumulates nothing: `grads` is
  /// overwritten. Returns the mean loss; `correct` receives the number of
  /// samples classified correctly by the batch-statistics forward pass.
  Scalar loss_and_gradients(const FeatureMap& x, const std::vector<int>& labels, Model& grads, int* correct = nullptr,
                            double grad_scale_override = 0.0);

  /// Quantized layer views in network order: stem, block convs, head, output.
  std::vector<lsq::TernaryLayer> ternary_layers() const;
  std::vector<std::vector<UnitDecision>> unit_decisions() const;
  OutputDecision output_decision() const;
  long parameter_count();
};

extern template class Model<float>;
extern template class Model<double>;

using ModelF = Model<float>;

/// Packs samples into a [4, batch*16*g] map (height = bit position, width = pair).
template <typename Scalar>
nn::FeatureMap<Scalar> make_input(std::span<const Sample> samples, std::span<const std::size_t> indices = {});

struct Confusion {
  long true_real = 0, true_random = 0, false_real = 0, false_random = 0;

  long total() const { return true_real + true_random + false_real + false_random; }
  double accuracy() const {
    return total() == 0 ? 0.0 : static_cast<double>(true_real + true_random) / static_cast<double>(total());
  }
  void add(Label truth, Label predicted);
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Label decide(double score, double threshold) { return score >= threshold ? Label::Real : Label::Random; }

std::pair<Label, double> classify(const ModelF& model, const Sample& sample);
std::vector<double> score_dataset(const ModelF& model, const Dataset& dataset, int batch_size = 1024);
Confusion evaluate(const ModelF& model, const Dataset& dataset, double threshold);
Confusion evaluate(const ModelF& model, const Dataset& dataset);

}  // namespace lwnd
