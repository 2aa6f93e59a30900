#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace lwnd::speck {

using Word = std::uint16_t;

constexpr int kAlpha = 7;
constexpr int kBeta = 2;
constexpr int kFullRounds = 22;

struct Block {
  Word left = 0;
  Word right = 0;

  friend bool operator==(const Block&, const Block&) = default;
  Block operator^(const Block& o) const { return {Word(left ^ o.left), Word(right ^ o.right)}; }
};

/// Key words in the order of the published test vectors: words[0] is the
/// most significant (l2), words[3] the least significant (k0).
struct MasterKey {
  std::array<Word, 4> words{};
};

struct RoundKeys {
  std::vector<Word> keys;
  int rounds() const { return static_cast<int>(keys.size()); }
};

constexpr Word ror(Word x, int r) { return Word((x >> r) | (x << (16 - r))); }
constexpr Word rol(Word x, int r) { return Word((x << r) | (x >> (16 - r))); }

/// One SPECK32 round: x' = (ROR(x,7) + y) ^ k, y' = ROL(y,2) ^ x'.
constexpr Block round_function(Block b, Word k) {
  Word x = Word(Word(ror(b.left, kAlpha) + b.right) ^ k);
  Word y = Word(rol(b.right, kBeta) ^ x);
  return {x, y};
}

RoundKeys key_schedule(const MasterKey& key, int rounds);
Block encrypt(Block block, const RoundKeys& round_keys);

}  // namespace lwnd::speck
