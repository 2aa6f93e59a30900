#include "lwnd/lowering.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "lwnd/errors.hpp"
#include "lwnd/rng.hpp"

namespace lwnd::lowering {

long LayerProgram::nonzeros() const {
  long n = 0;
  for (const auto& c : channels) n += c.pn.fan_in();
  return n;
}

namespace {

/// Largest S in [lo, hi] with pred(S), or lo - 1; pred must hold on a prefix.
template <typename Pred>
long last_true(long lo, long hi, Pred pred) {
  if (!pred(lo)) return lo - 1;
  long a = lo, b = hi;
  while (a < b) {
    const long m = a + (b - a + 1) / 2;
    if (pred(m)) {
      a = m;
    } else {
      b = m - 1;
    }
  }
  return a;
}

long output_theta(const OutputDecision& od, long lo, long hi, long factor) {
  return last_true(lo, hi, [&](long s) { return !od.real(factor * s); });
}

InputIndex index_of_column(const lsq::TernaryLayer& layer, int col) {
  if (layer.kind == lsq::LayerKind::Dense) return {col, 0, 0};
  const int kk = layer.kernel * layer.kernel;
  return {col / kk, (col / layer.kernel) % layer.kernel, col % layer.kernel};
}

int column_of_index(const lsq::TernaryLayer& layer, const InputIndex& i) {
  if (layer.kind == lsq::LayerKind::Dense) return i.channel;
  return (i.channel * layer.kernel + i.k1) * layer.kernel + i.k2;
}

bool has_skip_input(const LayerProgram& layer, const ChannelProgram& cp) {
  return layer.skip_source != kNoSkip && cp.skip_weight != 0;
}

std::string describe_input(const BitTensor& x) {
  std::string hex;
  const auto bits = x.bits();
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int nibble = 0;
    for (std::size_t k = 0; k < 4; ++k) nibble = nibble << 1 | (i + k < bits.size() ? bits[i + k] : 0);
    hex += "0123456789abcdef"[nibble];
  }
  return hex;
}

}  // namespace

FoldedThreshold fold_threshold(const UnitDecision& decision, int max_positive, int max_negative, bool with_skip) {
  if (max_positive < 0 || max_negative < 0) throw ValidationError("fold_threshold: negative fan-in");
  const long lo = -max_negative, hi = max_positive;
  FoldedThreshold f;
  f.sign_flip = decision.direction() < 0;
  auto theta_for = [&](int skip) {
    return last_true(lo, hi, [&](long s) { return f.sign_flip ? decision.fires(s, skip) : !decision.fires(s, skip); });
  };
  const long t0 = theta_for(0);
  const long t1 = with_skip ? theta_for(1) : t0;
  f.theta = t0;
  f.skip_weight = with_skip ? t0 - t1 : 0;
  auto saturated = [&](long t) { return t == lo - 1 || t == hi; };
  f.constant = saturated(t0) && saturated(t1);
  return f;
}

FoldedThreshold fold_batchnorm(const nn::BatchNorm<float>& bn, int channel, double delta, int max_positive,
                               int max_negative, bool with_skip) {
  if (channel < 0 || channel >= bn.channels()) throw ValidationError("fold_batchnorm: channel out of range");
  if (!(delta > 0)) throw ValidationError("fold_batchnorm: step size must be positive");
  return fold_threshold(make_unit_decision(delta, 0.0, &bn, channel), max_positive, max_negative, with_skip);
}

PNSets pn_sets(const lsq::TernaryLayer& layer, int out_channel) {
  PNSets pn;
  for (int j = 0; j < layer.fan_in(); ++j) {
    const int code = layer.codes(out_channel, j);
    if (code > 0) pn.positive.push_back(index_of_column(layer, j));
    if (code < 0) pn.negative.push_back(index_of_column(layer, j));
  }
  return pn;
}

std::vector<ChannelProgram> lower_layer(const lsq::TernaryLayer& codes, const std::vector<UnitDecision>* decisions,
                                        bool with_skip, ThetaMode mode) {
  if (decisions && static_cast<int>(decisions->size()) != codes.out_channels())
    throw ValidationError("lower_layer: decision count does not match output channels");
  std::vector<ChannelProgram> out;
  for (int c = 0; c < codes.out_channels(); ++c) {
    ChannelProgram cp;
    cp.pn = pn_sets(codes, c);
    if (mode == ThetaMode::Zero || !decisions) {
      cp.skip_weight = with_skip ? 1 : 0;
      out.push_back(std::move(cp));
      continue;
    }
    const UnitDecision& d = (*decisions)[static_cast<std::size_t>(c)];
    FoldedThreshold f = fold_threshold(d, static_cast<int>(cp.pn.positive.size()),
                                       static_cast<int>(cp.pn.negative.size()), with_skip);
    if (f.constant) {
      cp.pn = {};
      f = fold_threshold(d, 0, 0, with_skip);
    }
    cp.theta = f.theta;
    cp.sign_flip = f.sign_flip;
    cp.skip_weight = f.skip_weight;
    out.push_back(std::move(cp));
  }
  return out;
}

std::optional<ChannelProgram> fold_output_pair(const lsq::TernaryLayer& out_layer, const OutputDecision& decision,
                                               ThetaMode mode) {
  if (out_layer.out_channels() != 2) throw ValidationError("fold_output_pair: output layer must have two rows");
  if (!(out_layer.codes.row(0).cast<int>() == -out_layer.codes.row(1).cast<int>())) return std::nullopt;
  ChannelProgram cp;
  cp.pn = pn_sets(out_layer, 1);
  if (mode == ThetaMode::Folded)
    cp.theta = output_theta(decision, -static_cast<long>(cp.pn.negative.size()),
                            static_cast<long>(cp.pn.positive.size()), 2);
  return cp;
}

namespace {

void set_output_threshold(LayerProgram& out, const OutputDecision& od) {
  if (out.folded) {
    ChannelProgram& cp = out.channels.at(0);
    cp.theta = output_theta(od, -static_cast<long>(cp.pn.negative.size()), static_cast<long>(cp.pn.positive.size()), 2);
  } else {
    const long span = out.nonzeros();
    out.pair_theta = output_theta(od, -span, span, 1);
  }
}

}  // namespace

void set_decision_threshold(BooleanProgram& program, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("decision threshold must lie in (0, 1)");
  if (program.layers.empty() || program.layers.back().type != LayerType::Output)
    throw ValidationError("program has no output layer");
  program.score.threshold = threshold;
  set_output_threshold(program.layers.back(), program.score);
}

std::string literal_name(const LayerProgram& layer, int layer_index, const InputIndex& index) {
  (void)layer_index;
  static const char* kInputNames[] = {"C_l", "C_r", "C_l'", "C_r'"};
  const std::string src = layer.source == kFromInput ? "X" : "L" + std::to_string(layer.source);
  if (layer.type != LayerType::Conv) return src + "[" + std::to_string(index.channel) + "]";
  if (layer.source == kFromInput && layer.kernel == 1 && index.channel >= 0 && index.channel < 4)
    return kInputNames[index.channel];
  if (layer.kernel == 1) return src + "[" + std::to_string(index.channel) + "]";
  return src + "[" + std::to_string(index.channel) + "," + std::to_string(index.k1 - layer.padding) + "," +
         std::to_string(index.k2 - layer.padding) + "]";
}

BooleanExpr synthesize_channel(const ChannelProgram& cp, const LayerProgram& layer, int layer_index,
                               int max_literals) {
  const bool skip = has_skip_input(layer, cp);
  const int np = static_cast<int>(cp.pn.positive.size());
  const int n = cp.pn.fan_in() + (skip ? 1 : 0);
  if (n > max_literals || n > kMaxMinimizeVariables)
    throw ValidationError("synthesize_channel: fan-in " + std::to_string(n) + " exceeds the literal limit");
  std::vector<std::string> names;
  for (const auto& i : cp.pn.positive) names.push_back(literal_name(layer, layer_index, i));
  for (const auto& i : cp.pn.negative) names.push_back(literal_name(layer, layer_index, i));
  if (skip) names.push_back("L" + std::to_string(layer.skip_source) + "[skip]");
  std::vector<bool> table(std::size_t{1} << n);
  for (std::uint32_t a = 0; a < table.size(); ++a) {
    long acc = 0;
    for (int v = 0; v < cp.pn.fan_in(); ++v)
      if (a >> v & 1u) acc += v < np ? 1 : -1;
    const int s = skip ? static_cast<int>(a >> (n - 1) & 1u) : 0;
    table[a] = cp.evaluate(acc, s);
  }
  return minimize(table, std::move(names));
}

BooleanProgram lower_model(const ModelF& model, const LowerOptions& options) {
  if (model.stage != lsq::QuantStage::Full)
    throw ValidationError("lower: model is not fully quantized (stage '" + lsq::to_string(model.stage) + "')");
  const std::vector<lsq::TernaryLayer> tl = model.ternary_layers();
  const std::vector<std::vector<UnitDecision>> ud = model.unit_decisions();
  BooleanProgram p;
  p.group_size = model.config.group_size;
  p.score = model.output_decision();

  auto conv_layer = [&](std::size_t i, int source, int skip_source) {
    LayerProgram L;
    L.type = LayerType::Conv;
    L.in_channels = tl[i].in_channels;
    L.kernel = tl[i].kernel;
    L.padding = tl[i].padding;
    L.source = source;
    L.skip_source = skip_source;
    L.channels = lower_layer(tl[i], &ud[i], skip_source != kNoSkip, options.theta_mode);
    p.layers.push_back(std::move(L));
    return static_cast<int>(p.layers.size()) - 1;
  };

  std::size_t i = 0;
  int prev = conv_layer(i++, kFromInput, kNoSkip);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const int c1 = conv_layer(i++, prev, kNoSkip);
    prev = conv_layer(i++, c1, prev);
  }
  for (std::size_t h = 0; h < model.head.size(); ++h, ++i) {
    LayerProgram L;
    L.type = LayerType::Dense;
    L.in_channels = tl[i].fan_in();
    L.source = prev;
    L.channels = lower_layer(tl[i], &ud[i], false, options.theta_mode);
    p.layers.push_back(std::move(L));
    prev = static_cast<int>(p.layers.size()) - 1;
  }

  LayerProgram out;
  out.type = LayerType::Output;
  out.in_channels = tl[i].fan_in();
  out.source = prev;
  std::optional<ChannelProgram> folded;
  if (options.fold_output) {
    folded = fold_output_pair(tl[i], p.score, options.theta_mode);
    if (!folded) p.warnings.push_back("output rows are not exact negations; kept the two-channel comparison");
  }
  if (folded) {
    out.folded = true;
    out.channels = {*folded};
  } else {
    out.folded = false;
    out.channels = {ChannelProgram{pn_sets(tl[i], 0)}, ChannelProgram{pn_sets(tl[i], 1)}};
    if (options.theta_mode == ThetaMode::Folded) set_output_threshold(out, p.score);
  }
  p.layers.push_back(std::move(out));

  for (int l = 0; l < static_cast<int>(p.layers.size()); ++l) {
    const LayerProgram& L = p.layers[static_cast<std::size_t>(l)];
    if (L.type == LayerType::Output && !L.folded) continue;
    for (int c = 0; c < L.out_channels(); ++c) {
      const ChannelProgram& cp = L.channels[static_cast<std::size_t>(c)];
      const int n = cp.pn.fan_in() + (has_skip_input(L, cp) ? 1 : 0);
      if (cp.dead() || n > options.max_expression_literals) continue;
      p.expressions.push_back({l, c, synthesize_channel(cp, L, l, options.max_expression_literals).to_string()});
    }
  }
  return p;
}

namespace {

/// Number of binary values a layer produces for one input.
long plane_size(const BooleanProgram& p, int layer) {
  if (layer == kFromInput) return static_cast<long>(BitTensor::kChannels) * p.height() * p.width();
  const LayerProgram& L = p.layers.at(static_cast<std::size_t>(layer));
  switch (L.type) {
    case LayerType::Conv: return static_cast<long>(L.out_channels()) * p.height() * p.width();
    case LayerType::Dense: return L.out_channels();
    case LayerType::Output: return 1;
  }
  return 0;
}

int plane_channels(const BooleanProgram& p, int layer) {
  if (layer == kFromInput) return BitTensor::kChannels;
  return p.layers.at(static_cast<std::size_t>(layer)).out_channels();
}

bool is_spatial(const BooleanProgram& p, int layer) {
  return layer == kFromInput || p.layers.at(static_cast<std::size_t>(layer)).type == LayerType::Conv;
}

}  // namespace

void validate_program(const BooleanProgram& p) {
  auto fail = [](int l, const std::string& what) {
    throw ValidationError("program layer " + std::to_string(l) + ": " + what);
  };
  if (p.group_size < 1) throw ValidationError("program: group size must be positive");
  if (p.layers.empty() || p.layers.back().type != LayerType::Output)
    throw ValidationError("program: last layer must be the output layer");
  for (int l = 0; l < static_cast<int>(p.layers.size()); ++l) {
    const LayerProgram& L = p.layers[static_cast<std::size_t>(l)];
    if (L.source < kFromInput || L.source >= l) fail(l, "source must be an earlier layer or the input");
    if (L.type == LayerType::Output && l + 1 != static_cast<int>(p.layers.size())) fail(l, "output layer must be last");
    if (L.source != kFromInput && p.layers[static_cast<std::size_t>(L.source)].type == LayerType::Output)
      fail(l, "cannot read the output layer");
    if (L.type == LayerType::Conv) {
      if (!is_spatial(p, L.source)) fail(l, "conv layer must read a spatial plane");
      if (L.kernel < 1 || L.padding < 0 || L.kernel != 2 * L.padding + 1) fail(l, "kernel/padding must preserve size");
      if (L.in_channels != plane_channels(p, L.source)) fail(l, "input channel count does not match source");
    } else {
      if (L.in_channels != plane_size(p, L.source)) fail(l, "input width does not match source");
    }
    if (L.skip_source != kNoSkip) {
      if (L.type != LayerType::Conv) fail(l, "only conv layers take a skip input");
      if (L.skip_source < kFromInput || L.skip_source >= l || !is_spatial(p, L.skip_source) ||
          plane_channels(p, L.skip_source) != L.out_channels())
        fail(l, "skip source does not match the layer shape");
    }
    if (L.type == LayerType::Output && L.out_channels() != (L.folded ? 1 : 2))
      fail(l, "output layer needs one folded channel or two channels");
    if (L.out_channels() < 1) fail(l, "no channels");
    for (const auto& cp : L.channels) {
      for (const auto* set : {&cp.pn.positive, &cp.pn.negative})
        for (const auto& i : *set) {
          if (i.channel < 0 || i.channel >= L.in_channels) fail(l, "index out of range");
          if (L.type == LayerType::Conv) {
            if (i.k1 < 0 || i.k1 >= L.kernel || i.k2 < 0 || i.k2 >= L.kernel) fail(l, "kernel offset out of range");
          } else if (i.k1 != 0 || i.k2 != 0) {
            fail(l, "dense index with kernel offset");
          }
        }
      std::set<InputIndex> seen(cp.pn.positive.begin(), cp.pn.positive.end());
      seen.insert(cp.pn.negative.begin(), cp.pn.negative.end());
      if (seen.size() != static_cast<std::size_t>(cp.pn.fan_in())) fail(l, "repeated index in P/N sets");
      if (cp.skip_weight != 0 && L.skip_source == kNoSkip) fail(l, "skip weight without a skip source");
    }
  }
}

ProgramTrace run_program_trace(const BooleanProgram& p, const BitTensor& input) {
  if (input.depth() != p.group_size)
    throw ValidationError("run_program: input has " + std::to_string(input.depth()) + " pairs, program expects " +
                          std::to_string(p.group_size));
  const int H = p.height(), W = p.width(), HW = H * W;
  ProgramTrace t;
  t.planes.resize(p.layers.size());
  auto plane = [&](int src) -> std::span<const std::uint8_t> {
    if (src == kFromInput) return input.bits();
    return t.planes[static_cast<std::size_t>(src)];
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerProgram& L = p.layers[l];
    const auto in = plane(L.source);
    std::vector<std::uint8_t>& out = t.planes[l];
    if (L.type == LayerType::Conv) {
      out.assign(static_cast<std::size_t>(L.out_channels()) * HW, 0);
      const std::span<const std::uint8_t> skip =
          L.skip_source == kNoSkip ? std::span<const std::uint8_t>{} : plane(L.skip_source);
      // zero-padded copy of the input so every gather is a fixed offset
      const int P = L.padding, Hp = H + 2 * P, Wp = W + 2 * P;
      std::vector<std::uint8_t> padded(static_cast<std::size_t>(L.in_channels) * Hp * Wp, 0);
      for (int c = 0; c < L.in_channels; ++c)
        for (int h = 0; h < H; ++h)
          std::copy_n(in.begin() + c * HW + h * W, W, padded.begin() + (c * Hp + h + P) * Wp + P);
      std::vector<int> pos_off, neg_off;
      for (int c = 0; c < L.out_channels(); ++c) {
        const ChannelProgram& cp = L.channels[static_cast<std::size_t>(c)];
        auto offsets = [&](const std::vector<InputIndex>& set, std::vector<int>& off) {
          off.clear();
          for (const auto& i : set) off.push_back((i.channel * Hp + i.k1) * Wp + i.k2);
        };
        offsets(cp.pn.positive, pos_off);
        offsets(cp.pn.negative, neg_off);
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const std::uint8_t* base = padded.data() + h * Wp + w;
            long acc = 0;
            for (int o : pos_off) acc += base[o];
            for (int o : neg_off) acc -= base[o];
            const std::size_t pos = static_cast<std::size_t>(c * HW + h * W + w);
            const int s = skip.empty() ? 0 : skip[pos];
            out[pos] = cp.evaluate(acc, s) ? 1 : 0;
          }
      }
      continue;
    }
    auto accumulate = [&](const ChannelProgram& cp) {
      long acc = 0;
      for (const auto& i : cp.pn.positive) acc += in[static_cast<std::size_t>(i.channel)];
      for (const auto& i : cp.pn.negative) acc -= in[static_cast<std::size_t>(i.channel)];
      return acc;
    };
    if (L.type == LayerType::Dense) {
      out.resize(L.channels.size());
      for (std::size_t c = 0; c < L.channels.size(); ++c) out[c] = L.channels[c].evaluate(accumulate(L.channels[c]));
      continue;
    }
    if (L.folded) {
      const long s = accumulate(L.channels[0]);
      t.output_accumulator = 2 * s;
      t.raw_bit = L.channels[0].evaluate(s);
    } else {
      t.output_accumulator = accumulate(L.channels[1]) - accumulate(L.channels[0]);
      t.raw_bit = t.output_accumulator > L.pair_theta;
    }
    out.assign(1, t.raw_bit ? 1 : 0);
  }
  return t;
}

std::pair<Label, bool> run_program(const BooleanProgram& program, const BitTensor& input) {
  const ProgramTrace t = run_program_trace(program, input);
  return {t.raw_bit ? Label::Real : Label::Random, t.raw_bit};
}

Confusion evaluate_program(const BooleanProgram& p, const Dataset& ds, double threshold) {
  if (ds.group_size != p.group_size)
    throw ValidationError("dataset has " + std::to_string(ds.group_size) + " pairs per sample, program expects " +
                          std::to_string(p.group_size));
  if (ds.samples.empty()) throw ValidationError("evaluate_program: empty dataset");
  validate_program(p);
  const bool native = threshold == p.score.threshold;
  std::vector<Label> predicted(ds.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ProgramTrace t = run_program_trace(p, ds.samples[i].bits);
    const bool real = native ? t.raw_bit : p.score.score(t.output_accumulator) >= threshold;
    predicted[i] = real ? Label::Real : Label::Random;
  }
  Confusion c;
  for (std::size_t i = 0; i < ds.size(); ++i) c.add(ds.samples[i].label, predicted[i]);
  return c;
}

namespace {

std::string unit_name(int layer, int channel) {
  return "layer " + std::to_string(layer) + " channel " + std::to_string(channel);
}

/// Exhaustive check of one hidden unit over every assignment of its support.
std::optional<std::string> enumerate_unit(const lsq::TernaryLayer& tl, const UnitDecision& decision, bool model_skip,
                                          const LayerProgram& L, int layer, int channel, int width,
                                          EquivalenceReport& report) {
  const ChannelProgram& cp = L.channels[static_cast<std::size_t>(channel)];
  std::set<InputIndex> support(cp.pn.positive.begin(), cp.pn.positive.end());
  support.insert(cp.pn.negative.begin(), cp.pn.negative.end());
  for (int j = 0; j < tl.fan_in(); ++j)
    if (tl.codes(channel, j) != 0) support.insert(index_of_column(tl, j));
  const bool prog_skip = L.skip_source != kNoSkip;
  const bool skip_var = model_skip || prog_skip;
  const int n = static_cast<int>(support.size()) + (skip_var ? 1 : 0);
  if (n > width) return std::nullopt;
  ++report.units_enumerated;
  const std::vector<InputIndex> vars(support.begin(), support.end());
  std::vector<int> model_code(vars.size()), prog_code(vars.size(), 0);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    model_code[v] = tl.codes(channel, column_of_index(tl, vars[v]));
    if (std::find(cp.pn.positive.begin(), cp.pn.positive.end(), vars[v]) != cp.pn.positive.end()) prog_code[v] += 1;
    if (std::find(cp.pn.negative.begin(), cp.pn.negative.end(), vars[v]) != cp.pn.negative.end()) prog_code[v] -= 1;
  }
  for (std::uint32_t a = 0; a < (1u << n); ++a) {
    long model_acc = 0, prog_acc = 0;
    for (std::size_t v = 0; v < vars.size(); ++v)
      if (a >> v & 1u) {
        model_acc += model_code[v];
        prog_acc += prog_code[v];
      }
    const int s = skip_var ? static_cast<int>(a >> vars.size() & 1u) : 0;
    const bool m = decision.fires(model_acc, model_skip ? s : 0);
    const bool q = cp.evaluate(prog_acc, prog_skip ? s : 0);
    ++report.assignments_checked;
    if (m != q) {
      std::ostringstream os;
      os << unit_name(layer, channel) << ": assignment 0x" << std::hex << a << std::dec << " over " << n
         << " inputs gives model=" << m << " program=" << q;
      return os.str();
    }
  }
  return std::nullopt;
}

std::optional<std::string> enumerate_output(const lsq::TernaryLayer& tl, const OutputDecision& od,
                                            const LayerProgram& L, int layer, int width, EquivalenceReport& report) {
  std::set<int> support;
  for (const auto& cp : L.channels) {
    for (const auto& i : cp.pn.positive) support.insert(i.channel);
    for (const auto& i : cp.pn.negative) support.insert(i.channel);
  }
  for (int j = 0; j < tl.fan_in(); ++j)
    if (tl.codes(0, j) != 0 || tl.codes(1, j) != 0) support.insert(j);
  const int n = static_cast<int>(support.size());
  if (n > width) return std::nullopt;
  ++report.units_enumerated;
  const std::vector<int> vars(support.begin(), support.end());
  std::vector<int> index(static_cast<std::size_t>(tl.fan_in()), -1);
  for (std::size_t v = 0; v < vars.size(); ++v) index[static_cast<std::size_t>(vars[v])] = static_cast<int>(v);
  auto sum = [&](const ChannelProgram& cp, std::uint32_t a) {
    long s = 0;
    for (const auto& i : cp.pn.positive) s += a >> index[static_cast<std::size_t>(i.channel)] & 1u;
    for (const auto& i : cp.pn.negative) s -= a >> index[static_cast<std::size_t>(i.channel)] & 1u;
    return s;
  };
  for (std::uint32_t a = 0; a < (1u << n); ++a) {
    long model_a = 0;
    for (std::size_t v = 0; v < vars.size(); ++v)
      if (a >> v & 1u) model_a += tl.codes(1, vars[v]) - tl.codes(0, vars[v]);
    const bool m = od.real(model_a);
    const bool q = L.folded ? L.channels[0].evaluate(sum(L.channels[0], a))
                            : sum(L.channels[1], a) - sum(L.channels[0], a) > L.pair_theta;
    ++report.assignments_checked;
    if (m != q) {
      std::ostringstream os;
      os << "output layer " << layer << ": assignment 0x" << std::hex << a << std::dec << " over " << n
         << " inputs gives model=" << m << " program=" << q;
      return os.str();
    }
  }
  return std::nullopt;
}

}  // namespace

EquivalenceReport verify_equivalence(const BooleanProgram& program, const ModelF& model, long trials,
                                     int exhaustive_width, std::uint64_t seed) {
  if (model.stage != lsq::QuantStage::Full) throw ValidationError("verify: model is not fully quantized");
  if (trials < 0 || exhaustive_width < 0 || exhaustive_width > 24)
    throw ValidationError("verify: trials must be >= 0 and exhaustive width in [0, 24]");
  validate_program(program);
  EquivalenceReport report;
  auto fail = [&report](std::string why) {
    report.passed = false;
    report.counterexample = std::move(why);
    return report;
  };
  const std::vector<lsq::TernaryLayer> tl = model.ternary_layers();
  if (tl.size() != program.layers.size()) return fail("program has a different number of layers than the model");
  if (program.group_size != model.config.group_size) return fail("program and model disagree on the group size");
  for (std::size_t l = 0; l + 1 < tl.size(); ++l)
    if (program.layers[l].out_channels() != tl[l].out_channels())
      return fail("layer " + std::to_string(l) + " has a different channel count than the model");
  if (trials == 0 && exhaustive_width == 0) {
    report.warning = "no random trials and no exhaustive sweep requested: equivalence was not checked";
    return report;
  }

  const int g = program.group_size;
  const int HW = program.height() * g;
  constexpr long kBatch = 256;
  for (long start = 0; start < trials; start += kBatch) {
    const long n = std::min(kBatch, trials - start);
    std::vector<Sample> samples(static_cast<std::size_t>(n));
    for (long b = 0; b < n; ++b) {
      SplitMix64 rng = SplitMix64::stream(seed, static_cast<std::uint64_t>(start + b));
      BitTensor x(g);
      for (auto& bit : x.bits()) bit = static_cast<std::uint8_t>(rng() >> 63);
      samples[static_cast<std::size_t>(b)].bits = std::move(x);
    }
    const QuantizedTrace mt = model.quantized_trace(make_input<float>(samples));
    const OutputDecision od = model.output_decision();
    for (long b = 0; b < n; ++b) {
      const BitTensor& x = samples[static_cast<std::size_t>(b)].bits;
      const ProgramTrace pt = run_program_trace(program, x);
      ++report.trials_run;
      for (std::size_t l = 0; l + 1 < program.layers.size(); ++l) {
        const LayerProgram& L = program.layers[l];
        const bool spatial = L.type == LayerType::Conv;
        const int per = spatial ? HW : 1;
        for (int c = 0; c < L.out_channels(); ++c)
          for (int s = 0; s < per; ++s) {
            const bool m = mt.planes[l](c, spatial ? b * HW + s : b) > 0.5f;
            const bool q = pt.planes[l][static_cast<std::size_t>(c * per + s)] != 0;
            if (m != q) {
              std::string where = unit_name(static_cast<int>(l), c);
              if (spatial) where += " at (" + std::to_string(s / g) + "," + std::to_string(s % g) + ")";
              return fail(where + ": model=" + std::to_string(m) + " program=" + std::to_string(q) + " on input " +
                          describe_input(x));
            }
          }
      }
      const bool m = od.real(mt.output_accumulator[static_cast<std::size_t>(b)]);
      if (m != pt.raw_bit)
        return fail("output: model=" + std::to_string(m) + " program=" + std::to_string(pt.raw_bit) + " on input " +
                    describe_input(x));
    }
  }

  if (exhaustive_width > 0) {
    const std::vector<std::vector<UnitDecision>> ud = model.unit_decisions();
    std::vector<bool> model_skip(tl.size(), false);
    for (std::size_t b = 0; b < model.blocks.size(); ++b) model_skip[2 + 2 * b] = true;
    for (std::size_t l = 0; l + 1 < tl.size(); ++l) {
      const LayerProgram& L = program.layers[l];
      if (model_skip[l] != (L.skip_source != kNoSkip))
        return fail("layer " + std::to_string(l) + " skip wiring differs from the model");
      for (int c = 0; c < L.out_channels(); ++c)
        if (auto why = enumerate_unit(tl[l], ud[l][static_cast<std::size_t>(c)], model_skip[l], L,
                                      static_cast<int>(l), c, exhaustive_width, report))
          return fail(*why);
    }
    if (auto why = enumerate_output(tl.back(), model.output_decision(), program.layers.back(),
                                    static_cast<int>(tl.size()) - 1, exhaustive_width, report))
      return fail(*why);
  }
  return report;
}

}  // namespace lwnd::lowering
