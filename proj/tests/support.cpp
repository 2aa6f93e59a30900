#include "support.hpp"

#include <cmath>

#include "lwnd/rng.hpp"

namespace testing {

namespace {

std::uint16_t rotr(std::uint16_t v, unsigned r) { return static_cast<std::uint16_t>((v >> r) | (v << (16 - r))); }
std::uint16_t rotl(std::uint16_t v, unsigned r) { return static_cast<std::uint16_t>((v << r) | (v >> (16 - r))); }

double uniform(lwnd::SplitMix64& rng, double lo, double hi) { return lo + (hi - lo) * rng.next_unit(); }

int random_code(lwnd::SplitMix64& rng, double zero_fraction) {
  const double u = rng.next_unit();
  if (u < zero_fraction) return 0;
  return u < zero_fraction + (1 - zero_fraction) / 2 ? 1 : -1;
}

template <typename Unit>
void randomize_bn(Unit& u, double delta, double spread, lwnd::SplitMix64& rng) {
  for (int c = 0; c < u.bn.channels(); ++c) {
    u.bn.gamma(c) = static_cast<float>(uniform(rng, -2, 2));
    u.bn.beta(c) = static_cast<float>(uniform(rng, -1, 1));
    u.bn.running_mean(c) = static_cast<float>(delta * uniform(rng, -spread, spread));
    u.bn.running_var(c) = static_cast<float>(delta * delta * uniform(rng, 0.1, 4.0));
  }
}

void randomize_codes(lwnd::nn::Matrix<float>& w, float delta, lwnd::SplitMix64& rng, double zero_fraction) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<float>(random_code(rng, zero_fraction)) * delta;
}

int code_of(float w, float delta) {
  const double r = std::round(static_cast<double>(w) / static_cast<double>(delta));
  return r > 0 ? 1 : (r < 0 ? -1 : 0);
}

bool bn_fires(double acc, const lwnd::nn::BatchNorm<float>& bn, int c, int skip) {
  const double sigma = std::sqrt(static_cast<double>(bn.running_var(c)) + static_cast<double>(bn.eps));
  const double y = static_cast<double>(bn.gamma(c)) * (acc - static_cast<double>(bn.running_mean(c))) / sigma +
                   static_cast<double>(bn.beta(c));
  return y + skip > 0;
}

}  // namespace

ReferenceSpeck::ReferenceSpeck(std::array<std::uint16_t, 4> key, int rounds) {
  std::vector<std::uint16_t> l{key[1], key[2], key[3]};
  std::uint16_t k = key[0];
  for (int i = 0; i < rounds; ++i) {
    round_keys.push_back(k);
    const std::uint16_t li = static_cast<std::uint16_t>((k + rotr(l[static_cast<std::size_t>(i)], 7)) ^ i);
    l.push_back(li);
    k = static_cast<std::uint16_t>(rotl(k, 2) ^ li);
  }
}

std::array<std::uint16_t, 2> ReferenceSpeck::encrypt(std::uint16_t x, std::uint16_t y) const {
  for (std::uint16_t k : round_keys) {
    x = static_cast<std::uint16_t>((rotr(x, 7) + y) ^ k);
    y = static_cast<std::uint16_t>(rotl(y, 2) ^ x);
  }
  return {x, y};
}

std::array<std::uint16_t, 2> ReferenceSpeck::decrypt(std::uint16_t x, std::uint16_t y) const {
  for (auto it = round_keys.rbegin(); it != round_keys.rend(); ++it) {
    y = rotr(static_cast<std::uint16_t>(x ^ y), 2);
    x = rotl(static_cast<std::uint16_t>((x ^ *it) - y), 7);
  }
  return {x, y};
}

lwnd::ModelF random_quantized_model(const lwnd::ModelConfig& cfg, std::uint64_t seed,
                                    const RandomModelOptions& options) {
  lwnd::SplitMix64 rng(seed);
  lwnd::ModelF m = lwnd::ModelF::build(cfg, seed);
  m.set_stage(lwnd::lsq::QuantStage::Full);
  auto conv = [&](lwnd::ConvUnit<float>& u) {
    u.delta = static_cast<float>(uniform(rng, 0.05, 1.5));
    randomize_codes(u.conv.weight, u.delta, rng, options.zero_fraction);
    randomize_bn(u, u.delta, std::sqrt(static_cast<double>(u.conv.fan_in())) * 0.6, rng);
  };
  conv(m.stem);
  for (auto& b : m.blocks) {
    conv(b[0]);
    conv(b[1]);
  }
  for (auto& h : m.head) {
    h.delta = static_cast<float>(uniform(rng, 0.05, 1.5));
    randomize_codes(h.dense.weight, h.delta, rng, options.zero_fraction);
    const double spread = std::sqrt(static_cast<double>(h.dense.in_features())) * 0.6;
    for (Eigen::Index c = 0; c < h.dense.bias.size(); ++c)
      h.dense.bias(c) = static_cast<float>(h.delta * uniform(rng, -spread, spread));
    if (h.has_bn) randomize_bn(h, h.delta, spread, rng);
  }
  m.output.delta = static_cast<float>(uniform(rng, 0.05, 1.5));
  randomize_codes(m.output.dense.weight, m.output.delta, rng, options.zero_fraction);
  if (options.antisymmetric_output) m.output.dense.weight.row(0) = -m.output.dense.weight.row(1);
  m.output.dense.bias(0) = static_cast<float>(uniform(rng, -2, 2));
  m.output.dense.bias(1) = static_cast<float>(uniform(rng, -2, 2));
  return m;
}

lwnd::BitTensor random_bits(int group_size, std::uint64_t seed) {
  lwnd::SplitMix64 rng(seed);
  lwnd::BitTensor x(group_size);
  for (auto& b : x.bits()) b = static_cast<std::uint8_t>(rng() & 1u);
  return x;
}

OracleTrace oracle_forward(const lwnd::ModelF& model, const lwnd::BitTensor& x) {
  const int H = 16, W = x.depth();
  OracleTrace t;
  std::vector<std::uint8_t> in(x.bits().begin(), x.bits().end());
  auto conv = [&](const lwnd::ConvUnit<float>& u, const std::vector<std::uint8_t>& src,
                  const std::vector<std::uint8_t>* skip) {
    const auto& cv = u.conv;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(cv.out_channels * H * W));
    for (int o = 0; o < cv.out_channels; ++o)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          long s = 0;
          for (int c = 0; c < cv.in_channels; ++c)
            for (int a = 0; a < cv.kernel; ++a)
              for (int b = 0; b < cv.kernel; ++b) {
                const int hh = h + a - cv.padding, ww = w + b - cv.padding;
                if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                const int code = code_of(cv.weight(o, (c * cv.kernel + a) * cv.kernel + b), u.delta);
                s += code * src[static_cast<std::size_t>((c * H + hh) * W + ww)];
              }
          const std::size_t pos = static_cast<std::size_t>((o * H + h) * W + w);
          const int sk = skip ? (*skip)[pos] : 0;
          out[pos] = bn_fires(static_cast<double>(u.delta) * static_cast<double>(s), u.bn, o, sk) ? 1 : 0;
        }
    return out;
  };
  std::vector<std::uint8_t> a = conv(model.stem, in, nullptr);
  t.planes.push_back(a);
  for (const auto& blk : model.blocks) {
    std::vector<std::uint8_t> a1 = conv(blk[0], a, nullptr);
    t.planes.push_back(a1);
    a = conv(blk[1], a1, &a);
    t.planes.push_back(a);
  }
  for (const auto& u : model.head) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(u.dense.out_features()));
    for (int o = 0; o < u.dense.out_features(); ++o) {
      long s = 0;
      for (int j = 0; j < u.dense.in_features(); ++j) s += code_of(u.dense.weight(o, j), u.delta) * a[static_cast<std::size_t>(j)];
      const double y = static_cast<double>(u.delta) * static_cast<double>(s) + static_cast<double>(u.dense.bias(o));
      out[static_cast<std::size_t>(o)] = (u.has_bn ? bn_fires(y, u.bn, o, 0) : y > 0) ? 1 : 0;
    }
    t.planes.push_back(out);
    a = std::move(out);
  }
  double z[2];
  for (int o = 0; o < 2; ++o) {
    long s = 0;
    for (int j = 0; j < model.output.dense.in_features(); ++j)
      s += code_of(model.output.dense.weight(o, j), model.output.delta) * a[static_cast<std::size_t>(j)];
    z[o] = static_cast<double>(model.output.delta) * static_cast<double>(s) + static_cast<double>(model.output.dense.bias(o));
  }
  const double p_real = std::exp(z[1]) / (std::exp(z[0]) + std::exp(z[1]));
  t.real = p_real >= model.config.decision_threshold;
  return t;
}

}  // namespace testing
