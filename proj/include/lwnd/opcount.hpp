#pragma once

#include <span>
#include <string>
#include <vector>

#include "lwnd/lowering.hpp"
#include "lwnd/lsq.hpp"
#include "lwnd/model.hpp"

namespace lwnd::opcount {

struct OpCounts {
  long mults = 0;
  long adds = 0;
  long bools = 0;
  long indicators = 0;

  long total() const { return mults + adds + bools + indicators; }
  OpCounts& operator+=(const OpCounts& o) {
    mults += o.mults;
    adds += o.adds;
    bools += o.bools;
    indicators += o.indicators;
    return *this;
  }
  friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Group a layer is reported under.
enum class Component { Conv0, Residual, Head, Output };
std::string component_name(Component c);

/// D is the number of output positions (spatial size times depth); 1 for dense layers.
struct LayerShape {
  lsq::LayerKind kind = lsq::LayerKind::Dense;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 1;
  long D = 1;
  Component component = Component::Head;
};

/// mults = weights * D, adds = (weights - out_ch) * D; biases excluded.
OpCounts count_dense_layer(const LayerShape& shape);

struct CountOptions {
  /// Count an indicator for every hidden dense channel, live or not.
  bool count_dead_indicators = false;
};

/// bools = sum nnz_c * D, adds = sum over live channels (nnz_c - 1) * D,
/// indicators = live channels * D (all channels when count_dead).
OpCounts count_lightweight_layer(std::span<const int> nonzeros_per_channel, long D, bool count_dead = false);
OpCounts count_lightweight_layer(std::span<const lowering::ChannelProgram> channels, long D, bool count_dead = false);

/// Per-channel nonzero counts of one lowered layer.
struct LayerSparsity {
  Component component = Component::Head;
  long D = 1;
  std::vector<int> nonzeros;
  /// Extra additions (the two-channel output comparison).
  long extra_adds = 0;
  /// Replaces the per-channel indicator count when non-negative.
  long indicators = -1;
};

struct ComponentCounts {
  Component component;
  OpCounts counts;
};

struct CountReport {
  std::vector<ComponentCounts> components;  // always Conv0, Residual, Head, Output
  OpCounts total;
};

std::vector<LayerShape> layer_shapes(const ModelConfig& config);
std::vector<LayerShape> layer_shapes(const lowering::BooleanProgram& program);

CountReport count_dense(std::span<const LayerShape> shapes);
CountReport count_dense(const ModelConfig& config);
CountReport count_lightweight(std::span<const LayerSparsity> layers, const CountOptions& options = {});
std::vector<LayerSparsity> sparsity_profile(const lowering::BooleanProgram& program);
CountReport count_lightweight(const lowering::BooleanProgram& program, const CountOptions& options = {});

/// Reference sparsity profile of a trained g = 8 lightweight distinguisher.
std::vector<LayerSparsity> reference_sparsity_fixture();

/// Lightweight total over dense total.
double ratio(const CountReport& lightweight, const CountReport& dense);

std::string format_table(const CountReport& dense, const CountReport& lightweight);
std::string format_csv(const CountReport& dense, const CountReport& lightweight);

}  // namespace lwnd::opcount
