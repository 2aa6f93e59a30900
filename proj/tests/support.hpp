#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lwnd/dataset.hpp"
#include "lwnd/model.hpp"

namespace testing {

/// SPECK32/64 transcribed directly from the cipher designers' description,
/// with keys given as (k0, l0, l1, l2).
struct ReferenceSpeck {
  std::vector<std::uint16_t> round_keys;

  ReferenceSpeck(std::array<std::uint16_t, 4> key, int rounds);
  std::array<std::uint16_t, 2> encrypt(std::uint16_t x, std::uint16_t y) const;
  std::array<std::uint16_t, 2> decrypt(std::uint16_t x, std::uint16_t y) const;
};

struct RandomModelOptions {
  bool antisymmetric_output = true;
  double zero_fraction = 1.0 / 3.0;
};

/// Fully quantized model with random ternary codes, step sizes, batch-norm
/// statistics (both gamma signs) and biases.
lwnd::ModelF random_quantized_model(const lwnd::ModelConfig& cfg, std::uint64_t seed,
                                    const RandomModelOptions& options = {});

lwnd::BitTensor random_bits(int group_size, std::uint64_t seed);

/// Planes of every hidden layer and the final label, computed with plain
/// loops over integer codes straight from the model's parameters.
struct OracleTrace {
  std::vector<std::vector<std::uint8_t>> planes;
  bool real = false;
};
OracleTrace oracle_forward(const lwnd::ModelF& model, const lwnd::BitTensor& x);

}  // namespace testing
