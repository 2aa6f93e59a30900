#include "lwnd/speck.hpp"

#include "lwnd/errors.hpp"

namespace lwnd::speck {

RoundKeys key_schedule(const MasterKey& key, int rounds) {
  if (rounds < 0) throw ValidationError("key_schedule: negative round count");
  RoundKeys out;
  out.keys.reserve(static_cast<std::size_t>(rounds));
  // l-words rotate through a 3-slot window; the key schedule reuses the
  // round function with the round index as key.
  std::array<Word, 3> l{key.words[2], key.words[1], key.words[0]};
  Word k = key.words[3];
  for (int i = 0; i < rounds; ++i) {
    out.keys.push_back(k);
    Block next = round_function({l[i % 3], k}, Word(i));
    l[i % 3] = next.left;
    k = next.right;
  }
  return out;
}

Block encrypt(Block block, const RoundKeys& round_keys) {
  for (Word k : round_keys.keys) block = round_function(block, k);
  return block;
}

}  // namespace lwnd::speck
