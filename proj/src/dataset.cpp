#include "lwnd/dataset.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <string>

#include "byte_io.hpp"
#include "lwnd/errors.hpp"

namespace lwnd {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

std::size_t packed_bytes(int group_size) {
  return (static_cast<std::size_t>(BitTensor::kChannels * BitTensor::kWidth * group_size) + 7) / 8;
}

speck::Word channel_word(const CiphertextPair& p, int channel) {
  switch (channel) {
    case 0: return p.first.left;
    case 1: return p.first.right;
    case 2: return p.second.left;
    default: return p.second.right;
  }
}

}  // namespace

std::size_t BitTensor::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [label](const Sample& s) { return s.label == label; }));
}

speck::MasterKey random_key(SplitMix64& rng) {
  speck::MasterKey key;
  for (auto& w : key.words) w = rng.next_word();
  return key;
}

PairRecord make_pair_record(Label label, const speck::MasterKey& key, SplitMix64& rng, int rounds,
                            const InputDifference& delta) {
  PairRecord rec;
  rec.key = key;
  rec.plain0 = {rng.next_word(), rng.next_word()};
  if (label == Label::Real) {
    rec.plain1 = rec.plain0 ^ delta.as_block();
  } else {
    rec.plain1 = {rng.next_word(), rng.next_word()};
  }
  const speck::RoundKeys ks = speck::key_schedule(key, rounds);
  rec.cipher = {speck::encrypt(rec.plain0, ks), speck::encrypt(rec.plain1, ks)};
  return rec;
}

CiphertextPair make_pair(Label label, const speck::MasterKey& key, SplitMix64& rng, int rounds,
                         const InputDifference& delta) {
  return make_pair_record(label, key, rng, rounds, delta).cipher;
}

std::vector<PairRecord> sample_pairs(std::uint64_t seed, std::size_t index, int rounds, const InputDifference& delta,
                                     int group_size) {
  SplitMix64 rng = SplitMix64::stream(seed, index);
  const Label label = index % 2 == 0 ? Label::Real : Label::Random;
  std::vector<PairRecord> out;
  out.reserve(static_cast<std::size_t>(group_size));
  for (int j = 0; j < group_size; ++j) {
    const speck::MasterKey key = random_key(rng);
    out.push_back(make_pair_record(label, key, rng, rounds, delta));
  }
  return out;
}

BitTensor encode_input(std::span<const CiphertextPair> pairs) {
  if (pairs.empty()) throw ValidationError("encode_input: need at least one pair");
  const int depth = static_cast<int>(pairs.size());
  BitTensor t(depth);
  for (int d = 0; d < depth; ++d) {
    for (int c = 0; c < BitTensor::kChannels; ++c) {
      const speck::Word w = channel_word(pairs[static_cast<std::size_t>(d)], c);
      for (int b = 0; b < BitTensor::kWidth; ++b) t.set(c, b, d, static_cast<std::uint8_t>((w >> (15 - b)) & 1));
    }
  }
  return t;
}

Dataset gen_dataset(std::size_t n_per_class, int rounds, const InputDifference& delta, int group_size,
                    std::uint64_t seed) {
  if (group_size < 1) throw ValidationError("gen_dataset: group_size must be >= 1");
  if (n_per_class < 1) throw ValidationError("gen_dataset: n_per_class must be >= 1");
  if (n_per_class % static_cast<std::size_t>(group_size) != 0)
    throw ValidationError("gen_dataset: n_per_class (" + std::to_string(n_per_class) +
                          ") is not divisible by group_size (" + std::to_string(group_size) + ")");
  if (rounds < 0) throw ValidationError("gen_dataset: negative round count");

  Dataset ds;
  ds.rounds = rounds;
  ds.group_size = group_size;
  ds.seed = seed;
  ds.delta = delta;
  const std::size_t n_samples = 2 * (n_per_class / static_cast<std::size_t>(group_size));
  ds.samples.resize(n_samples);

#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto records = sample_pairs(seed, i, rounds, delta, group_size);
    std::vector<CiphertextPair> pairs;
    pairs.reserve(records.size());
    for (const auto& r : records) pairs.push_back(r.cipher);
    ds.samples[i].bits = encode_input(pairs);
    ds.samples[i].label = i % 2 == 0 ? Label::Real : Label::Random;
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open dataset for writing: " + path.string());
  out.write(kMagic, 4);
  detail::put_le<std::uint32_t>(out, kVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.rounds));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.group_size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.samples.size()));
  detail::put_le<std::uint64_t>(out, dataset.seed);
  detail::put_le<std::uint16_t>(out, dataset.delta.left);
  detail::put_le<std::uint16_t>(out, dataset.delta.right);

  const int g = dataset.group_size;
  std::vector<char> packed(packed_bytes(g));
  for (const Sample& s : dataset.samples) {
    if (s.bits.depth() != g) throw ValidationError("write_dataset: sample depth differs from group_size");
    std::fill(packed.begin(), packed.end(), 0);
    // channel-major, then pair, then bit position; MSB-first within bytes.
    std::size_t bit = 0;
    for (int c = 0; c < BitTensor::kChannels; ++c)
      for (int d = 0; d < g; ++d)
        for (int w = 0; w < BitTensor::kWidth; ++w, ++bit)
          if (s.bits.at(c, w, d)) packed[bit / 8] = static_cast<char>(packed[bit / 8] | (0x80 >> (bit % 8)));
    out.put(static_cast<char>(s.label));
    out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
  }
  if (!out) throw IoError("failed writing dataset: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw IoError("not an NDS1 dataset: " + path.string());
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kVersion) throw IoError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.rounds = static_cast<int>(detail::get_le<std::uint32_t>(in, "rounds"));
  ds.group_size = static_cast<int>(detail::get_le<std::uint32_t>(in, "group_size"));
  const auto n = detail::get_le<std::uint32_t>(in, "n_samples");
  ds.seed = detail::get_le<std::uint64_t>(in, "seed");
  ds.delta.left = detail::get_le<std::uint16_t>(in, "delta_left");
  ds.delta.right = detail::get_le<std::uint16_t>(in, "delta_right");
  if (ds.group_size < 1) throw IoError("dataset group_size must be >= 1");

  const int g = ds.group_size;
  std::vector<char> packed(packed_bytes(g));
  constexpr std::uintmax_t kHeaderBytes = 4 + 4 * 4 + 8 + 2 * 2;
  const std::uintmax_t expected = kHeaderBytes + std::uintmax_t{n} * (1 + packed.size());
  if (std::filesystem::file_size(path) != expected)
    throw IoError("dataset size does not match its header (" + std::to_string(n) + " samples): " + path.string());
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    char label;
    if (!in.get(label)) throw IoError("truncated dataset: " + path.string());
    if (label != 0 && label != 1) throw IoError("invalid label byte in dataset");
    s.label = static_cast<Label>(label);
    if (!in.read(packed.data(), static_cast<std::streamsize>(packed.size())))
      throw IoError("truncated dataset: " + path.string());
    s.bits = BitTensor(g);
    std::size_t bit = 0;
    for (int c = 0; c < BitTensor::kChannels; ++c)
      for (int d = 0; d < g; ++d)
        for (int w = 0; w < BitTensor::kWidth; ++w, ++bit)
          s.bits.set(c, w, d, static_cast<std::uint8_t>((packed[bit / 8] >> (7 - bit % 8)) & 1));
  }
  return ds;
}

}  // namespace lwnd
