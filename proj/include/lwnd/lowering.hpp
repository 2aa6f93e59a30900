#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lwnd/boolean_expr.hpp"
#include "lwnd/dataset.hpp"
#include "lwnd/lsq.hpp"
#include "lwnd/model.hpp"
#include "lwnd/quantized_unit.hpp"

namespace lwnd::lowering {

/// Position inside a receptive field. Dense layers use channel = input
/// feature index and k1 = k2 = 0.
struct InputIndex {
  int channel = 0;
  int k1 = 0;
  int k2 = 0;
  friend auto operator<=>(const InputIndex&, const InputIndex&) = default;
};

struct PNSets {
  std::vector<InputIndex> positive;  // code +1
  std::vector<InputIndex> negative;  // code -1
  int fan_in() const { return static_cast<int>(positive.size() + negative.size()); }
};

/// One output channel: fires = I(S_P - S_N + skip_weight * skip > theta) xor sign_flip.
struct ChannelProgram {
  PNSets pn;
  long theta = 0;
  bool sign_flip = false;
  long skip_weight = 0;

  bool dead() const { return pn.fan_in() == 0; }
  bool evaluate(long accumulator, int skip = 0) const { return (accumulator + skip_weight * skip > theta) != sign_flip; }
  friend bool operator==(const ChannelProgram& a, const ChannelProgram& b) {
    return a.pn.positive == b.pn.positive && a.pn.negative == b.pn.negative && a.theta == b.theta &&
           a.sign_flip == b.sign_flip && a.skip_weight == b.skip_weight;
  }
};

enum class LayerType { Conv, Dense, Output };

constexpr int kFromInput = -1;
constexpr int kNoSkip = -2;

struct LayerProgram {
  LayerType type = LayerType::Conv;
  int in_channels = 0;  // conv: channels; dense/output: features
  int kernel = 1;
  int padding = 0;
  int source = kFromInput;  // index of the producing layer
  int skip_source = kNoSkip;
  /// Output layer only: one folded channel, or two channels compared as
  /// I(S_real - S_random > pair_theta) (channel 0 = random, 1 = real).
  bool folded = true;
  long pair_theta = 0;
  std::vector<ChannelProgram> channels;

  int out_channels() const { return static_cast<int>(channels.size()); }
  long nonzeros() const;
  friend bool operator==(const LayerProgram&, const LayerProgram&) = default;
};

struct ExpressionEntry {
  int layer = 0;
  int channel = 0;
  std::string formula;
  friend bool operator==(const ExpressionEntry&, const ExpressionEntry&) = default;
};

/// The lowered distinguisher: only gathers, integer additions and indicator
/// comparisons on the [4, 16, g] input bits.
struct BooleanProgram {
  int group_size = 1;
  std::vector<LayerProgram> layers;
  /// Score of the final accumulator, kept so the decision threshold can be re-derived.
  OutputDecision score;
  std::vector<ExpressionEntry> expressions;
  std::vector<std::string> warnings;

  int height() const { return BitTensor::kWidth; }
  int width() const { return group_size; }
  friend bool operator==(const BooleanProgram& a, const BooleanProgram& b) {
    return a.group_size == b.group_size && a.layers == b.layers && a.expressions == b.expressions &&
           a.score.delta == b.score.delta && a.score.bias_diff == b.score.bias_diff &&
           a.score.threshold == b.score.threshold;
  }
};

/// Folded: thresholds reproduce the trained batch norm / bias exactly.
/// Zero: theta = 0 everywhere, skip bits added with weight 1.
enum class ThetaMode { Folded, Zero };

struct FoldedThreshold {
  long theta = 0;
  bool sign_flip = false;
  long skip_weight = 0;
  bool constant = false;  // decision does not depend on the accumulator
};

/// Rewrites `decision.fires(S, skip)` over integer S in [-max_negative,
/// max_positive] as I(S + skip_weight*skip > theta) xor sign_flip.
FoldedThreshold fold_threshold(const UnitDecision& decision, int max_positive, int max_negative, bool with_skip);

/// Batch-norm fold for a conv channel: pre-activation gamma*(delta*S - mean)/sigma + beta.
FoldedThreshold fold_batchnorm(const nn::BatchNorm<float>& bn, int channel, double delta, int max_positive,
                               int max_negative, bool with_skip = false);

PNSets pn_sets(const lsq::TernaryLayer& layer, int out_channel);

/// Lowers a ternary layer. Without decisions (or in Zero mode) every channel
/// uses the literal theta = 0 rule.
std::vector<ChannelProgram> lower_layer(const lsq::TernaryLayer& codes, const std::vector<UnitDecision>* decisions,
                                        bool with_skip = false, ThetaMode mode = ThetaMode::Folded);

/// Folds the 2-way output into one channel over the "real" row when the two
/// rows are exact negations. Returns nullopt otherwise.
std::optional<ChannelProgram> fold_output_pair(const lsq::TernaryLayer& out_layer, const OutputDecision& decision,
                                               ThetaMode mode = ThetaMode::Folded);

struct LowerOptions {
  ThetaMode theta_mode = ThetaMode::Folded;
  bool fold_output = true;
  int max_expression_literals = 8;
};

/// Lowers a fully quantized model.
BooleanProgram lower_model(const ModelF& model, const LowerOptions& options = {});

/// Literal names: stem inputs are C_l, C_r, C_l', C_r'.
std::string literal_name(const LayerProgram& layer, int layer_index, const InputIndex& index);

BooleanExpr synthesize_channel(const ChannelProgram& cp, const LayerProgram& layer, int layer_index,
                               int max_literals = 8);

struct ProgramTrace {
  std::vector<std::vector<std::uint8_t>> planes;  // per layer; output layer holds the final bit
  long output_accumulator = 0;                   // S (folded) or S_real - S_random
  bool raw_bit = false;
};

/// Checks layer wiring and index ranges; throws ValidationError.
void validate_program(const BooleanProgram& program);

ProgramTrace run_program_trace(const BooleanProgram& program, const BitTensor& input);
std::pair<Label, bool> run_program(const BooleanProgram& program, const BitTensor& input);

/// Confusion counts of the program on a dataset. A threshold other than the
/// program's own is applied to the score of the final accumulator.
Confusion evaluate_program(const BooleanProgram& program, const Dataset& dataset, double threshold);

/// Re-derives the final threshold for a new decision threshold.
void set_decision_threshold(BooleanProgram& program, double threshold);

struct EquivalenceReport {
  bool passed = true;
  long trials_run = 0;
  long units_enumerated = 0;
  long assignments_checked = 0;
  std::string warning;
  std::string counterexample;
};

/// Randomized whole-network trials against the model's exact quantized
/// forward pass, plus exhaustive enumeration of every unit whose support has
/// at most `exhaustive_width` input bits.
EquivalenceReport verify_equivalence(const BooleanProgram& program, const ModelF& model, long trials,
                                     int exhaustive_width, std::uint64_t seed = 0x5eed);

}  // namespace lwnd::lowering
