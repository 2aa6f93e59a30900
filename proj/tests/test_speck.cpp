#include <doctest.h>

#include <map>

#include "lwnd/rng.hpp"
#include "lwnd/speck.hpp"
#include "support.hpp"

using namespace lwnd::speck;

namespace {

const MasterKey kVectorKey{{0x1918, 0x1110, 0x0908, 0x0100}};

Block decrypt(Block b, const RoundKeys& ks) {
  for (int i = ks.rounds() - 1; i >= 0; --i) {
    const Word y = ror(Word(b.left ^ b.right), kBeta);
    const Word x = rol(Word(Word(b.left ^ ks.keys[static_cast<std::size_t>(i)]) - y), kAlpha);
    b = {x, y};
  }
  return b;
}

}  // namespace

TEST_CASE("reference implementation reproduces the published vector") {
  const testing::ReferenceSpeck ref({0x0100, 0x0908, 0x1110, 0x1918}, 22);
  const auto c = ref.encrypt(0x6574, 0x694c);
  CHECK(c[0] == 0xa868);
  CHECK(c[1] == 0x42f2);
  const auto p = ref.decrypt(c[0], c[1]);
  CHECK(p[0] == 0x6574);
  CHECK(p[1] == 0x694c);
}

TEST_CASE("published test vector") {
  const Block c = encrypt({0x6574, 0x694c}, key_schedule(kVectorKey, 22));
  CHECK(c.left == 0xa868);
  CHECK(c.right == 0x42f2);
}

TEST_CASE("key schedule") {
  CHECK(key_schedule(kVectorKey, 0).keys.empty());
  const RoundKeys one = key_schedule(kVectorKey, 1);
  REQUIRE(one.rounds() == 1);
  CHECK(one.keys[0] == 0x0100);
  const RoundKeys full = key_schedule(kVectorKey, 22);
  const testing::ReferenceSpeck ref({0x0100, 0x0908, 0x1110, 0x1918}, 22);
  CHECK(full.keys == ref.round_keys);
}

TEST_CASE("zero rounds is the identity") {
  const Block b{0x1234, 0xabcd};
  CHECK(encrypt(b, RoundKeys{}) == b);
}

TEST_CASE("one round by hand") {
  // ROR(0x0001, 7) = 0x0200; + 0 = 0x0200; xor 0 -> x' = 0x0200; y' = ROL(0, 2) ^ x' = 0x0200.
  const Block b = encrypt({0x0001, 0x0000}, RoundKeys{{0x0000}});
  CHECK(b.left == 0x0200);
  CHECK(b.right == 0x0200);
}

TEST_CASE("agrees with the reference on random keys and blocks") {
  lwnd::SplitMix64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    MasterKey k;
    for (auto& w : k.words) w = rng.next_word();
    const int rounds = static_cast<int>(rng() % 23);
    const Block p{rng.next_word(), rng.next_word()};
    const testing::ReferenceSpeck ref({k.words[3], k.words[2], k.words[1], k.words[0]}, rounds);
    const auto r = ref.encrypt(p.left, p.right);
    const Block c = encrypt(p, key_schedule(k, rounds));
    REQUIRE(c.left == r[0]);
    REQUIRE(c.right == r[1]);
  }
}

TEST_CASE("decrypt inverts encrypt on random blocks") {
  lwnd::SplitMix64 rng(5);
  MasterKey k;
  for (auto& w : k.words) w = rng.next_word();
  const RoundKeys ks = key_schedule(k, 22);
  for (int t = 0; t < 10000; ++t) {
    const Block p{rng.next_word(), rng.next_word()};
    REQUIRE(decrypt(encrypt(p, ks), ks) == p);
  }
}

TEST_CASE("one-round output difference of 0x0040/0000 is stable across seeds") {
  auto most_frequent = [](std::uint64_t seed) {
    lwnd::SplitMix64 rng(seed);
    std::map<std::uint32_t, int> counts;
    for (int t = 0; t < 1000; ++t) {
      MasterKey k;
      for (auto& w : k.words) w = rng.next_word();
      const RoundKeys ks = key_schedule(k, 1);
      const Block p{rng.next_word(), rng.next_word()};
      const Block d = encrypt(p, ks) ^ encrypt(p ^ Block{0x0040, 0x0000}, ks);
      ++counts[std::uint32_t(d.left) << 16 | d.right];
    }
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  };
  const std::uint32_t a = most_frequent(1);
  CHECK(a == most_frequent(2));
  CHECK(a == most_frequent(3));
  // ROR(0x0040, 7) = 0x8000; the carry out of the top bit vanishes.
  CHECK(a == 0x80008000u);
}
