#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "lwnd/rng.hpp"
#include "lwnd/speck.hpp"

namespace lwnd {

struct InputDifference {
  speck::Word left = 0x0040;
  speck::Word right = 0x0000;

  speck::Block as_block() const { return {left, right}; }
  friend bool operator==(const InputDifference&, const InputDifference&) = default;
};

enum class Label : std::uint8_t { Random = 0, Real = 1 };

/// Binary tensor of shape [4, 16, depth]: channels (C_l, C_r, C_l', C_r'),
/// bit position (0 = most significant bit), pair index. Row-major storage.
class BitTensor {
 public:
  static constexpr int kChannels = 4;
  static constexpr int kWidth = 16;

  BitTensor() = default;
  explicit BitTensor(int depth) : depth_(depth), bits_(static_cast<std::size_t>(kChannels * kWidth * depth), 0) {}

  int depth() const { return depth_; }
  std::size_t size() const { return bits_.size(); }

  std::uint8_t at(int channel, int width, int pair) const { return bits_[index(channel, width, pair)]; }
  void set(int channel, int width, int pair, std::uint8_t bit) { bits_[index(channel, width, pair)] = bit; }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  std::size_t popcount() const;

  friend bool operator==(const BitTensor&, const BitTensor&) = default;

 private:
  std::size_t index(int c, int w, int d) const {
    return (static_cast<std::size_t>(c) * kWidth + static_cast<std::size_t>(w)) * static_cast<std::size_t>(depth_) +
           static_cast<std::size_t>(d);
  }

  int depth_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Sample {
  BitTensor bits;
  Label label = Label::Random;
};

struct Dataset {
  std::vector<Sample> samples;
  int rounds = 0;
  int group_size = 1;
  std::uint64_t seed = 0;
  InputDifference delta;

  std::size_t size() const { return samples.size(); }
  std::size_t count(Label label) const;
};

using CiphertextPair = std::pair<speck::Block, speck::Block>;

/// Everything drawn for one pair; kept so real pairs can be re-derived.
struct PairRecord {
  speck::MasterKey key;
  speck::Block plain0;
  speck::Block plain1;
  CiphertextPair cipher;
};

speck::MasterKey random_key(SplitMix64& rng);

PairRecord make_pair_record(Label label, const speck::MasterKey& key, SplitMix64& rng, int rounds,
                            const InputDifference& delta);

CiphertextPair make_pair(Label label, const speck::MasterKey& key, SplitMix64& rng, int rounds,
                         const InputDifference& delta);

/// Pairs of sample `index` as drawn by gen_dataset: even indices are real,
/// odd indices random; each pair uses its own key.
std::vector<PairRecord> sample_pairs(std::uint64_t seed, std::size_t index, int rounds, const InputDifference& delta,
                                     int group_size);

BitTensor encode_input(std::span<const CiphertextPair> pairs);

Dataset gen_dataset(std::size_t n_per_class, int rounds, const InputDifference& delta, int group_size,
                    std::uint64_t seed);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace lwnd
