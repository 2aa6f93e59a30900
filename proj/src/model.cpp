#include "lwnd/model.hpp"

#include <cmath>
#include <random>

#include "lwnd/rng.hpp"

namespace lwnd {

using lsq::QuantStage;

void ModelConfig::validate() const {
  if (group_size < 1) throw ValidationError("model config: group_size must be >= 1");
  if (channels < 1) throw ValidationError("model config: channels must be >= 1");
  if (residual_blocks < 0) throw ValidationError("model config: residual_blocks must be >= 0");
  for (int d : dense_sizes)
    if (d < 1) throw ValidationError("model config: dense sizes must be >= 1");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
    throw ValidationError("model config: decision_threshold must lie in (0, 1)");
}

void Confusion::add(Label truth, Label predicted) {
  if (truth == Label::Real) {
    (predicted == Label::Real ? true_real : false_random) += 1;
  } else {
    (predicted == Label::Random ? true_random : false_real) += 1;
  }
}

namespace {

template <typename Scalar>
void he_init(nn::Matrix<Scalar>& w, int fan_in, SplitMix64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<Scalar>(normal(rng));
}

template <typename Scalar>
ConvUnit<Scalar> make_conv_unit(int in, int out, int kernel, int padding, SplitMix64& rng) {
  ConvUnit<Scalar> u;
  u.conv = nn::Conv2d<Scalar>(in, out, kernel, padding);
  he_init(u.conv.weight, u.conv.fan_in(), rng);
  u.bn = nn::BatchNorm<Scalar>(out);
  return u;
}

template <typename Scalar>
nn::Matrix<Scalar> effective_weight(const nn::Matrix<Scalar>& w, Scalar delta, QuantStage stage) {
  if (stage == QuantStage::FullPrecision) return w;
  return lsq::quantize_weights(w, delta);
}

template <typename Scalar>
nn::Conv2d<Scalar> effective_conv(const ConvUnit<Scalar>& u, QuantStage stage) {
  nn::Conv2d<Scalar> c(u.conv.in_channels, u.conv.out_channels, u.conv.kernel, u.conv.padding);
  c.weight = effective_weight(u.conv.weight, u.delta, stage);
  return c;
}

template <typename Scalar>
nn::Dense<Scalar> effective_dense(const DenseUnit<Scalar>& u, QuantStage stage) {
  nn::Dense<Scalar> d;
  d.weight = effective_weight(u.dense.weight, u.delta, stage);
  d.bias = u.dense.bias;
  return d;
}

template <typename Scalar>
nn::Matrix<Scalar> activate(const nn::Matrix<Scalar>& pre, bool binary, HiddenActivation kind) {
  if (binary) return lsq::binarize_activation(pre);
  return kind == HiddenActivation::Sigmoid ? nn::sigmoid(pre) : nn::relu(pre);
}

template <typename Scalar>
nn::Matrix<Scalar> activate_backward(const nn::Matrix<Scalar>& pre, const nn::Matrix<Scalar>& grad, bool binary,
                                     HiddenActivation kind) {
  if (binary) return lsq::binarize_backward(pre, grad);
  return kind == HiddenActivation::Sigmoid ? nn::sigmoid_backward(pre, grad) : nn::relu_backward(pre, grad);
}

template <typename Scalar>
Scalar layer_grad_scale(std::size_t weight_count, double override_scale) {
  return static_cast<Scalar>(override_scale > 0.0 ? override_scale : lsq::default_grad_scale(weight_count));
}

template <typename Scalar>
void push_vector(std::vector<ParamRef<Scalar>>& out, const std::string& name, nn::Vector<Scalar>& v, bool decay) {
  out.push_back({name, v.data(), v.size(), 1, decay});
}

template <typename Scalar>
void push_matrix(std::vector<ParamRef<Scalar>>& out, const std::string& name, nn::Matrix<Scalar>& m, bool decay) {
  out.push_back({name, m.data(), m.rows(), m.cols(), decay});
}

template <typename To, typename From>
ConvUnit<To> cast_unit(const ConvUnit<From>& u) {
  ConvUnit<To> r;
  r.conv = nn::Conv2d<To>(u.conv.in_channels, u.conv.out_channels, u.conv.kernel, u.conv.padding);
  r.conv.weight = u.conv.weight.template cast<To>();
  r.bn.gamma = u.bn.gamma.template cast<To>();
  r.bn.beta = u.bn.beta.template cast<To>();
  r.bn.running_mean = u.bn.running_mean.template cast<To>();
  r.bn.running_var = u.bn.running_var.template cast<To>();
  r.bn.eps = static_cast<To>(u.bn.eps);
  r.bn.momentum = static_cast<To>(u.bn.momentum);
  r.delta = static_cast<To>(u.delta);
  return r;
}

template <typename To, typename From>
DenseUnit<To> cast_unit(const DenseUnit<From>& u) {
  DenseUnit<To> r;
  r.dense.weight = u.dense.weight.template cast<To>();
  r.dense.bias = u.dense.bias.template cast<To>();
  r.has_bn = u.has_bn;
  r.bn.gamma = u.bn.gamma.template cast<To>();
  r.bn.beta = u.bn.beta.template cast<To>();
  r.bn.running_mean = u.bn.running_mean.template cast<To>();
  r.bn.running_var = u.bn.running_var.template cast<To>();
  r.bn.eps = static_cast<To>(u.bn.eps);
  r.bn.momentum = static_cast<To>(u.bn.momentum);
  r.delta = static_cast<To>(u.delta);
  return r;
}

/// Binary output plane of a conv unit on the exact path.
template <typename Scalar>
nn::Matrix<Scalar> exact_conv_unit(const ConvUnit<Scalar>& u, const nn::FeatureMap<Scalar>& in,
                                   const nn::Matrix<Scalar>* skip) {
  nn::Conv2d<Scalar> codes(u.conv.in_channels, u.conv.out_channels, u.conv.kernel, u.conv.padding);
  codes.weight = lsq::ternary_codes(u.conv.weight, u.delta);
  const nn::FeatureMap<Scalar> acc = nn::conv2d_forward(codes, in);
  nn::Matrix<Scalar> out(acc.values.rows(), acc.values.cols());
  for (Eigen::Index c = 0; c < acc.values.rows(); ++c) {
    const UnitDecision d = make_unit_decision(static_cast<double>(u.delta), 0.0, &u.bn, static_cast<int>(c));
    for (Eigen::Index j = 0; j < acc.values.cols(); ++j) {
      const int s = skip ? static_cast<int>((*skip)(c, j)) : 0;
      out(c, j) = d.fires(std::lround(acc.values(c, j)), s) ? Scalar(1) : Scalar(0);
    }
  }
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> exact_dense_unit(const DenseUnit<Scalar>& u, const nn::Matrix<Scalar>& in) {
  const nn::Matrix<Scalar> acc = lsq::ternary_codes(u.dense.weight, u.delta) * in;
  nn::Matrix<Scalar> out(acc.rows(), acc.cols());
  for (Eigen::Index c = 0; c < acc.rows(); ++c) {
    const UnitDecision d = make_unit_decision(static_cast<double>(u.delta), static_cast<double>(u.dense.bias(c)),
                                              u.has_bn ? &u.bn : nullptr, static_cast<int>(c));
    for (Eigen::Index j = 0; j < acc.cols(); ++j) out(c, j) = d.fires(std::lround(acc(c, j))) ? Scalar(1) : Scalar(0);
  }
  return out;
}

}  // namespace

template <typename Scalar>
Model<Scalar> Model<Scalar>::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  Model m;
  m.config = cfg;
  m.stem = make_conv_unit<Scalar>(ModelConfig::kInputChannels, cfg.channels, 1, 0, rng);
  for (int b = 0; b < cfg.residual_blocks; ++b)
    m.blocks.push_back({make_conv_unit<Scalar>(cfg.channels, cfg.channels, 3, 1, rng),
                        make_conv_unit<Scalar>(cfg.channels, cfg.channels, 3, 1, rng)});
  int in = cfg.flatten_width();
  for (int size : cfg.dense_sizes) {
    DenseUnit<Scalar> u;
    u.dense = nn::Dense<Scalar>(in, size);
    he_init(u.dense.weight, in, rng);
    u.has_bn = cfg.head_batchnorm;
    u.bn = nn::BatchNorm<Scalar>(size);
    m.head.push_back(std::move(u));
    in = size;
  }
  m.output.dense = nn::Dense<Scalar>(in, 2);
  nn::Matrix<Scalar> row(1, in);
  he_init(row, in, rng);
  m.output.dense.weight.row(1) = row;
  m.output.dense.weight.row(0) = -row;
  return m;
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::zeros_like() const {
  Model z = *this;
  for (auto& t : z.tensors()) t.map().setZero();
  return z;
}

template <typename Scalar>
template <typename Other>
Model<Other> Model<Scalar>::cast() const {
  Model<Other> r;
  r.config = config;
  r.stage = stage;
  r.stem = cast_unit<Other>(stem);
  for (const auto& b : blocks) r.blocks.push_back({cast_unit<Other>(b[0]), cast_unit<Other>(b[1])});
  for (const auto& h : head) r.head.push_back(cast_unit<Other>(h));
  r.output = cast_unit<Other>(output);
  return r;
}

template <typename Scalar>
std::vector<ParamRef<Scalar>> Model<Scalar>::parameters() {
  std::vector<ParamRef<Scalar>> out;
  auto conv = [&out](const std::string& prefix, ConvUnit<Scalar>& u) {
    push_matrix(out, prefix + ".weight", u.conv.weight, true);
    push_vector(out, prefix + ".bn.gamma", u.bn.gamma, false);
    push_vector(out, prefix + ".bn.beta", u.bn.beta, false);
    out.push_back({prefix + ".delta", &u.delta, 1, 1, false});
  };
  auto dense = [&out](const std::string& prefix, DenseUnit<Scalar>& u) {
    push_matrix(out, prefix + ".weight", u.dense.weight, true);
    push_vector(out, prefix + ".bias", u.dense.bias, false);
    if (u.has_bn) {
      push_vector(out, prefix + ".bn.gamma", u.bn.gamma, false);
      push_vector(out, prefix + ".bn.beta", u.bn.beta, false);
    }
    out.push_back({prefix + ".delta", &u.delta, 1, 1, false});
  };
  conv("stem", stem);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    conv("block" + std::to_string(b) + ".conv1", blocks[b][0]);
    conv("block" + std::to_string(b) + ".conv2", blocks[b][1]);
  }
  for (std::size_t h = 0; h < head.size(); ++h) dense("head" + std::to_string(h), head[h]);
  dense("output", output);
  return out;
}

template <typename Scalar>
std::vector<ParamRef<Scalar>> Model<Scalar>::tensors() {
  std::vector<ParamRef<Scalar>> out = parameters();
  auto stats = [&out](const std::string& prefix, nn::BatchNorm<Scalar>& bn) {
    push_vector(out, prefix + ".bn.running_mean", bn.running_mean, false);
    push_vector(out, prefix + ".bn.running_var", bn.running_var, false);
  };
  stats("stem", stem.bn);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    stats("block" + std::to_string(b) + ".conv1", blocks[b][0].bn);
    stats("block" + std::to_string(b) + ".conv2", blocks[b][1].bn);
  }
  for (std::size_t h = 0; h < head.size(); ++h)
    if (head[h].has_bn) stats("head" + std::to_string(h), head[h].bn);
  return out;
}

template <typename Scalar>
long Model<Scalar>::parameter_count() {
  long n = 0;
  for (const auto& p : parameters()) n += static_cast<long>(p.rows * p.cols);
  return n;
}

template <typename Scalar>
void Model<Scalar>::set_stage(QuantStage next) {
  if (next != QuantStage::FullPrecision) {
    auto init = [](auto& weight, Scalar& delta) {
      if (!(delta > Scalar(0))) delta = lsq::initial_step_size(weight);
    };
    init(stem.conv.weight, stem.delta);
    for (auto& b : blocks)
      for (auto& u : b) init(u.conv.weight, u.delta);
    for (auto& h : head) init(h.dense.weight, h.delta);
    init(output.dense.weight, output.delta);
  }
  stage = next;
}

template <typename Scalar>
typename Model<Scalar>::Matrix Model<Scalar>::logits(const FeatureMap& x) const {
  const bool binary = stage == QuantStage::Full;
  auto conv_unit = [&](const ConvUnit<Scalar>& u, const FeatureMap& in, const Matrix* skip) {
    FeatureMap pre = nn::conv2d_forward(effective_conv(u, stage), in);
    Matrix n = nn::batchnorm_forward_infer(u.bn, pre.values);
    if (skip) n += *skip;
    return FeatureMap(activate(n, binary, HiddenActivation::Relu), pre.height, pre.width);
  };
  FeatureMap a = conv_unit(stem, x, nullptr);
  for (const auto& b : blocks) {
    FeatureMap a1 = conv_unit(b[0], a, nullptr);
    a = conv_unit(b[1], a1, &a.values);
  }
  Matrix h = nn::flatten(a);
  for (const auto& u : head) {
    Matrix r = nn::dense_forward(effective_dense(u, stage), h);
    if (u.has_bn) r = nn::batchnorm_forward_infer(u.bn, r);
    h = activate(r, binary, config.head_activation);
  }
  return nn::dense_forward(effective_dense(output, stage), h);
}

template <typename Scalar>
QuantizedTrace Model<Scalar>::quantized_trace(const FeatureMap& x) const {
  if (stage != QuantStage::Full) throw ValidationError("quantized_trace: model is not fully quantized");
  QuantizedTrace t;
  FeatureMap a(exact_conv_unit<Scalar>(stem, x, nullptr), x.height, x.width);
  t.planes.push_back(a.values.template cast<float>());
  for (const auto& b : blocks) {
    FeatureMap a1(exact_conv_unit<Scalar>(b[0], a, nullptr), a.height, a.width);
    t.planes.push_back(a1.values.template cast<float>());
    a = FeatureMap(exact_conv_unit(b[1], a1, &a.values), a.height, a.width);
    t.planes.push_back(a.values.template cast<float>());
  }
  Matrix h = nn::flatten(a);
  for (const auto& u : head) {
    h = exact_dense_unit(u, h);
    t.planes.push_back(h.template cast<float>());
  }
  const Matrix acc = lsq::ternary_codes(output.dense.weight, output.delta) * h;
  const OutputDecision od = output_decision();
  for (Eigen::Index j = 0; j < acc.cols(); ++j) {
    const long a_diff = std::lround(acc(1, j)) - std::lround(acc(0, j));
    t.output_accumulator.push_back(a_diff);
    t.scores.push_back(od.score(a_diff));
  }
  return t;
}

template <typename Scalar>
std::vector<double> Model<Scalar>::scores(const FeatureMap& x) const {
  if (stage == QuantStage::Full) return quantized_trace(x).scores;
  const Matrix z = logits(x);
  std::vector<double> s(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    s[static_cast<std::size_t>(j)] = real_probability(static_cast<double>(z(0, j)), static_cast<double>(z(1, j)));
  return s;
}

template <typename Scalar>
Scalar Model<Scalar>::loss_and_gradients(const FeatureMap& x, const std::vector<int>& labels, Model& grads,
                                         int* correct, double grad_scale_override) {
  const bool binary = stage == QuantStage::Full;
  const bool quantized = stage != QuantStage::FullPrecision;

  struct ConvTrace {
    nn::Conv2d<Scalar> eff;
    const FeatureMap* input;
    nn::BatchNormCache<Scalar> cache;
    Matrix pre_act;  // batch norm output plus skip
    FeatureMap out;
  };
  auto conv_forward = [&](ConvUnit<Scalar>& u, const FeatureMap& in, const Matrix* skip) {
    ConvTrace t;
    t.eff = effective_conv(u, stage);
    t.input = &in;
    const FeatureMap pre = nn::conv2d_forward(t.eff, in);
    t.pre_act = nn::batchnorm_forward_train(u.bn, pre.values, &t.cache);
    if (skip) t.pre_act += *skip;
    t.out = FeatureMap(activate(t.pre_act, binary, HiddenActivation::Relu), pre.height, pre.width);
    return t;
  };
  // Returns the gradient with respect to the unit input; `grad_pre_act`
  // receives the gradient at the skip junction.
  auto weight_grads = [&](const Matrix& w, Scalar delta, const Matrix& g_eff, Matrix& g_w, Scalar& g_delta) {
    g_w = lsq::ste_weight_grad(g_eff);
    g_delta = quantized ? lsq::step_size_grad(w, delta, g_eff,
                                              layer_grad_scale<Scalar>(static_cast<std::size_t>(w.size()),
                                                                       grad_scale_override))
                        : Scalar(0);
  };
  auto conv_backward = [&](ConvUnit<Scalar>& u, ConvUnit<Scalar>& gu, const ConvTrace& t, const Matrix& g_out,
                           Matrix* g_skip) {
    const Matrix g_pre_act = activate_backward(t.pre_act, g_out, binary, HiddenActivation::Relu);
    if (g_skip) *g_skip = g_pre_act;
    const nn::BatchNormGrads<Scalar> bg = nn::batchnorm_backward(u.bn, t.cache, g_pre_act);
    gu.bn.gamma = bg.gamma;
    gu.bn.beta = bg.beta;
    const nn::ConvGrads<Scalar> cg =
        nn::conv2d_backward(t.eff, *t.input, FeatureMap(bg.input, t.out.height, t.out.width));
    weight_grads(u.conv.weight, u.delta, cg.weight, gu.conv.weight, gu.delta);
    return cg.input.values;
  };

  // forward
  ConvTrace stem_t = conv_forward(stem, x, nullptr);
  std::vector<std::array<ConvTrace, 2>> block_t;
  block_t.reserve(blocks.size());
  const FeatureMap* current = &stem_t.out;
  for (auto& b : blocks) {
    ConvTrace t1 = conv_forward(b[0], *current, nullptr);
    block_t.push_back({std::move(t1), ConvTrace{}});
    block_t.back()[1] = conv_forward(b[1], block_t.back()[0].out, &current->values);
    current = &block_t.back()[1].out;
  }
  struct DenseTrace {
    nn::Dense<Scalar> eff;
    Matrix input, pre_act;
    nn::BatchNormCache<Scalar> cache;
  };
  std::vector<DenseTrace> head_t;
  Matrix h = nn::flatten(*current);
  for (auto& u : head) {
    DenseTrace t;
    t.eff = effective_dense(u, stage);
    t.input = h;
    t.pre_act = nn::dense_forward(t.eff, h);
    if (u.has_bn) t.pre_act = nn::batchnorm_forward_train(u.bn, t.pre_act, &t.cache);
    h = activate(t.pre_act, binary, config.head_activation);
    head_t.push_back(std::move(t));
  }
  const nn::Dense<Scalar> out_eff = effective_dense(output, stage);
  const Matrix z = nn::dense_forward(out_eff, h);
  const nn::LossResult<Scalar> loss = nn::softmax_cross_entropy(z, labels);
  if (correct) {
    int c = 0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double p = real_probability(static_cast<double>(z(0, j)), static_cast<double>(z(1, j)));
      if ((p >= config.decision_threshold ? 1 : 0) == labels[static_cast<std::size_t>(j)]) ++c;
    }
    *correct = c;
  }

  // backward
  const nn::DenseGrads<Scalar> og = nn::dense_backward(out_eff, h, loss.grad);
  weight_grads(output.dense.weight, output.delta, og.weight, grads.output.dense.weight, grads.output.delta);
  grads.output.dense.bias = og.bias;
  Matrix g = og.input;
  for (std::size_t i = head.size(); i-- > 0;) {
    DenseUnit<Scalar>& u = head[i];
    DenseUnit<Scalar>& gu = grads.head[i];
    const DenseTrace& t = head_t[i];
    Matrix g_pre = activate_backward(t.pre_act, g, binary, config.head_activation);
    if (u.has_bn) {
      const nn::BatchNormGrads<Scalar> bg = nn::batchnorm_backward(u.bn, t.cache, g_pre);
      gu.bn.gamma = bg.gamma;
      gu.bn.beta = bg.beta;
      g_pre = bg.input;
    }
    const nn::DenseGrads<Scalar> dg = nn::dense_backward(t.eff, t.input, g_pre);
    weight_grads(u.dense.weight, u.delta, dg.weight, gu.dense.weight, gu.delta);
    gu.dense.bias = dg.bias;
    g = dg.input;
  }
  Matrix g_map = nn::unflatten(g, current->channels(), current->height, current->width).values;
  for (std::size_t b = blocks.size(); b-- > 0;) {
    Matrix g_skip;
    const Matrix g_mid = conv_backward(blocks[b][1], grads.blocks[b][1], block_t[b][1], g_map, &g_skip);
    g_map = conv_backward(blocks[b][0], grads.blocks[b][0], block_t[b][0], g_mid, nullptr);
    g_map += g_skip;
  }
  conv_backward(stem, grads.stem, stem_t, g_map, nullptr);
  return loss.value;
}

template <typename Scalar>
std::vector<lsq::TernaryLayer> Model<Scalar>::ternary_layers() const {
  std::vector<lsq::TernaryLayer> out;
  auto conv = [&out](const ConvUnit<Scalar>& u) {
    out.push_back(lsq::extract_ternary(u.conv.weight, u.delta, lsq::LayerKind::Conv, u.conv.in_channels, u.conv.kernel,
                                       u.conv.padding));
  };
  auto dense = [&out](const DenseUnit<Scalar>& u) {
    out.push_back(lsq::extract_ternary(u.dense.weight, u.delta, lsq::LayerKind::Dense, u.dense.in_features(), 1, 0));
  };
  conv(stem);
  for (const auto& b : blocks) {
    conv(b[0]);
    conv(b[1]);
  }
  for (const auto& h : head) dense(h);
  dense(output);
  return out;
}

template <typename Scalar>
std::vector<std::vector<UnitDecision>> Model<Scalar>::unit_decisions() const {
  std::vector<std::vector<UnitDecision>> out;
  auto conv = [&out](const ConvUnit<Scalar>& u) {
    std::vector<UnitDecision> v;
    for (int c = 0; c < u.conv.out_channels; ++c)
      v.push_back(make_unit_decision(static_cast<double>(u.delta), 0.0, &u.bn, c));
    out.push_back(std::move(v));
  };
  conv(stem);
  for (const auto& b : blocks) {
    conv(b[0]);
    conv(b[1]);
  }
  for (const auto& u : head) {
    std::vector<UnitDecision> v;
    for (int c = 0; c < u.dense.out_features(); ++c)
      v.push_back(make_unit_decision(static_cast<double>(u.delta), static_cast<double>(u.dense.bias(c)),
                                     u.has_bn ? &u.bn : nullptr, c));
    out.push_back(std::move(v));
  }
  return out;
}

template <typename Scalar>
OutputDecision Model<Scalar>::output_decision() const {
  OutputDecision d;
  d.delta = static_cast<double>(output.delta);
  d.bias_diff = static_cast<double>(output.dense.bias(1)) - static_cast<double>(output.dense.bias(0));
  d.threshold = config.decision_threshold;
  return d;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;

template <typename Scalar>
nn::FeatureMap<Scalar> make_input(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  const std::size_t batch = indices.empty() ? samples.size() : indices.size();
  if (batch == 0) throw ValidationError("make_input: empty batch");
  const int g = samples[indices.empty() ? 0 : indices[0]].bits.depth();
  const int hw = ModelConfig::kInputHeight * g;
  nn::FeatureMap<Scalar> x(ModelConfig::kInputChannels, static_cast<int>(batch), ModelConfig::kInputHeight, g);
  for (std::size_t b = 0; b < batch; ++b) {
    const Sample& s = samples[indices.empty() ? b : indices[b]];
    if (s.bits.depth() != g) throw ValidationError("make_input: samples with different group sizes");
    const auto bits = s.bits.bits();
    for (int c = 0; c < ModelConfig::kInputChannels; ++c)
      for (int k = 0; k < hw; ++k)
        x.values(c, static_cast<Eigen::Index>(b) * hw + k) = static_cast<Scalar>(bits[static_cast<std::size_t>(c * hw + k)]);
  }
  return x;
}

template nn::FeatureMap<float> make_input<float>(std::span<const Sample>, std::span<const std::size_t>);
template nn::FeatureMap<double> make_input<double>(std::span<const Sample>, std::span<const std::size_t>);

std::pair<Label, double> classify(const ModelF& model, const Sample& sample) {
  if (sample.bits.depth() != model.config.group_size)
    throw ValidationError("classify: sample group size does not match the model");
  const auto x = make_input<float>(std::span<const Sample>(&sample, 1));
  const double score = model.scores(x).front();
  return {decide(score, model.config.decision_threshold), score};
}

std::vector<double> score_dataset(const ModelF& model, const Dataset& dataset, int batch_size) {
  if (dataset.group_size != model.config.group_size)
    throw ValidationError("dataset group size " + std::to_string(dataset.group_size) + " does not match model group size " +
                          std::to_string(model.config.group_size));
  std::vector<double> scores;
  scores.reserve(dataset.size());
  const std::span<const Sample> all(dataset.samples);
  for (std::size_t start = 0; start < dataset.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), dataset.size() - start);
    const auto s = model.scores(make_input<float>(all.subspan(start, n)));
    scores.insert(scores.end(), s.begin(), s.end());
  }
  return scores;
}

Confusion evaluate(const ModelF& model, const Dataset& dataset, double threshold) {
  if (dataset.size() == 0) throw ValidationError("evaluate: empty dataset");
  const auto scores = score_dataset(model, dataset);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) c.add(dataset.samples[i].label, decide(scores[i], threshold));
  return c;
}

Confusion evaluate(const ModelF& model, const Dataset& dataset) {
  return evaluate(model, dataset, model.config.decision_threshold);
}

}  // namespace lwnd
