#include <doctest.h>

#include <algorithm>

#include "lwnd/errors.hpp"
#include "lwnd/lowering.hpp"
#include "lwnd/program_io.hpp"
#include "lwnd/rng.hpp"
#include "support.hpp"

using namespace lwnd;
using namespace lwnd::lowering;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.group_size = 2;
  cfg.channels = 4;
  cfg.dense_sizes = {8, 8};
  return cfg;
}

// Output channels 1, 15, 24, 25 of a 32-channel stem; columns are C_l, C_r, C_l', C_r'.
lsq::TernaryLayer table_one_stem() {
  lsq::TernaryLayer t;
  t.kind = lsq::LayerKind::Conv;
  t.in_channels = 4;
  t.kernel = 1;
  t.scale = 1.0;
  t.codes.setZero(32, 4);
  t.codes.row(1) << -1, 0, 1, 0;
  t.codes.row(15) << 1, 0, -1, 0;
  t.codes.row(24) << 0, 1, 0, -1;
  t.codes.row(25) << 0, -1, 0, 1;
  return t;
}

LayerProgram stem_program(std::vector<ChannelProgram> channels) {
  LayerProgram L;
  L.type = LayerType::Conv;
  L.in_channels = 4;
  L.kernel = 1;
  L.source = kFromInput;
  L.channels = std::move(channels);
  return L;
}

UnitDecision random_decision(SplitMix64& rng, int fan_in) {
  UnitDecision u;
  u.delta = 0.05 + 1.45 * rng.next_unit();
  u.normalized = true;
  u.mean = u.delta * (2 * rng.next_unit() - 1) * 0.6 * fan_in;
  u.scale = (4 * rng.next_unit() - 2) / (u.delta * std::sqrt(0.1 + 3.9 * rng.next_unit()));
  u.beta = 2 * rng.next_unit() - 1;
  return u;
}

// Truth table of a channel over all assignments of its fan-in, skip as the top variable.
std::vector<bool> unit_table(const ChannelProgram& cp, const std::vector<InputIndex>& vars, bool skip) {
  const int n = static_cast<int>(vars.size()) + (skip ? 1 : 0);
  std::vector<bool> t(std::size_t{1} << n);
  for (std::uint32_t a = 0; a < t.size(); ++a) {
    long acc = 0;
    for (std::size_t v = 0; v < vars.size(); ++v) {
      if (!(a >> v & 1u)) continue;
      if (std::find(cp.pn.positive.begin(), cp.pn.positive.end(), vars[v]) != cp.pn.positive.end()) ++acc;
      if (std::find(cp.pn.negative.begin(), cp.pn.negative.end(), vars[v]) != cp.pn.negative.end()) --acc;
    }
    t[a] = cp.evaluate(acc, skip ? static_cast<int>(a >> vars.size() & 1u) : 0);
  }
  return t;
}

}  // namespace

TEST_CASE("stem code pattern synthesizes the four difference expressions") {
  const lsq::TernaryLayer t = table_one_stem();
  const auto channels = lower_layer(t, nullptr);
  const LayerProgram L = stem_program(channels);
  CHECK(synthesize_channel(channels[1], L, 0).to_string() == "C_l' ∧ ¬C_l");
  CHECK(synthesize_channel(channels[15], L, 0).to_string() == "C_l ∧ ¬C_l'");
  CHECK(synthesize_channel(channels[24], L, 0).to_string() == "C_r ∧ ¬C_r'");
  CHECK(synthesize_channel(channels[25], L, 0).to_string() == "C_r' ∧ ¬C_r");
  int live = 0;
  for (const auto& cp : channels) live += cp.dead() ? 0 : 1;
  CHECK(live == 4);
  CHECK(channels[0].dead());
  CHECK(synthesize_channel(channels[0], L, 0).to_string() == "0");
}

TEST_CASE("full lowering of a model carrying the stem pattern") {
  ModelConfig cfg = small_config();
  cfg.channels = 32;
  ModelF m = testing::random_quantized_model(cfg, 8);
  const lsq::TernaryLayer t = table_one_stem();
  m.stem.delta = 0.5f;
  for (int o = 0; o < 32; ++o)
    for (int c = 0; c < 4; ++c) m.stem.conv.weight(o, c) = 0.5f * t.codes(o, c);
  m.stem.bn = nn::BatchNorm<float>(32);
  m.stem.bn.running_var.setConstant(1.0f - m.stem.bn.eps);
  const BooleanProgram p = lower_model(m);
  std::vector<std::string> stem_exprs;
  for (const auto& e : p.expressions)
    if (e.layer == 0) stem_exprs.push_back("L0." + std::to_string(e.channel) + " = " + e.formula);
  CHECK(stem_exprs == std::vector<std::string>{"L0.1 = C_l' ∧ ¬C_l", "L0.15 = C_l ∧ ¬C_l'", "L0.24 = C_r ∧ ¬C_r'",
                                               "L0.25 = C_r' ∧ ¬C_r"});
}

TEST_CASE("batch-norm folding examples") {
  nn::BatchNorm<float> bn(1);
  bn.running_var(0) = 1.0f - bn.eps;
  FoldedThreshold f = fold_batchnorm(bn, 0, 1.0, 5, 5);
  CHECK(f.theta == 0);
  CHECK_FALSE(f.sign_flip);

  // gamma 1, beta -0.5: S - 0.5 > 0 iff S > 0
  bn.beta(0) = -0.5f;
  f = fold_batchnorm(bn, 0, 1.0, 5, 5);
  CHECK(f.theta == 0);
  bn.beta(0) = -2.5f;
  f = fold_batchnorm(bn, 0, 1.0, 5, 5);
  CHECK(f.theta == 2);

  // negative gamma reverses the comparison
  bn.beta(0) = 0.0f;
  bn.gamma(0) = -1.0f;
  f = fold_batchnorm(bn, 0, 1.0, 5, 5);
  CHECK(f.sign_flip);
  for (long s = -5; s <= 5; ++s) {
    const ChannelProgram cp{{}, f.theta, f.sign_flip, f.skip_weight};
    CHECK(cp.evaluate(s) == (-static_cast<double>(s) > 0));
  }

  // beta beyond the reachable range makes the channel constant
  bn.gamma(0) = 1.0f;
  bn.beta(0) = 100.0f;
  CHECK(fold_batchnorm(bn, 0, 1.0, 5, 5).constant);
}

TEST_CASE("folded thresholds agree with the decision on every reachable accumulator") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const int pos = static_cast<int>(rng() % 12), neg = static_cast<int>(rng() % 12);
    const UnitDecision u = random_decision(rng, pos + neg + 1);
    for (const bool skip : {false, true}) {
      const FoldedThreshold f = fold_threshold(u, pos, neg, skip);
      const ChannelProgram cp{{}, f.theta, f.sign_flip, f.skip_weight};
      for (long s = -neg; s <= pos; ++s)
        for (int k = 0; k <= (skip ? 1 : 0); ++k) REQUIRE(cp.evaluate(s, k) == u.fires(s, k));
    }
  }
}

TEST_CASE("isolated 3x3 single-channel units are exact on all inputs") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    lsq::TernaryLayer t;
    t.kind = lsq::LayerKind::Conv;
    t.in_channels = 1;
    t.kernel = 3;
    t.padding = 1;
    t.scale = 1.0;
    t.codes.resize(1, 9);
    for (int j = 0; j < 9; ++j) t.codes(0, j) = static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1);
    const std::vector<UnitDecision> d{random_decision(rng, 9)};
    for (const bool skip : {false, true}) {
      const ChannelProgram cp = lower_layer(t, &d, skip)[0];
      for (std::uint32_t a = 0; a < (skip ? 1024u : 512u); ++a) {
        long model_acc = 0, prog_acc = 0;
        for (int j = 0; j < 9; ++j) {
          if (!(a >> j & 1u)) continue;
          model_acc += t.codes(0, j);
          const InputIndex idx{0, j / 3, j % 3};
          if (std::find(cp.pn.positive.begin(), cp.pn.positive.end(), idx) != cp.pn.positive.end()) ++prog_acc;
          if (std::find(cp.pn.negative.begin(), cp.pn.negative.end(), idx) != cp.pn.negative.end()) --prog_acc;
        }
        const int k = static_cast<int>(a >> 9 & 1u);
        REQUIRE(cp.evaluate(prog_acc, k) == d[0].fires(model_acc, k));
      }
    }
  }
}

TEST_CASE("output pair folding requires negated rows") {
  lsq::TernaryLayer t;
  t.kind = lsq::LayerKind::Dense;
  t.in_channels = 4;
  t.scale = 1.0;
  t.codes.resize(2, 4);
  t.codes << -1, 1, 0, 1, 1, -1, 0, -1;
  const OutputDecision od{0.7, 0.1, 0.505};
  const auto folded = fold_output_pair(t, od);
  REQUIRE(folded.has_value());
  CHECK(folded->pn.positive.size() == 1);
  CHECK(folded->pn.negative.size() == 2);
  for (long s = -2; s <= 1; ++s) CHECK(folded->evaluate(s) == od.real(2 * s));
  t.codes(0, 2) = 1;
  CHECK_FALSE(fold_output_pair(t, od).has_value());

  ModelF m = testing::random_quantized_model(small_config(), 4, {.antisymmetric_output = false});
  m.output.dense.weight(0, 0) = m.output.delta;
  m.output.dense.weight(1, 0) = m.output.delta;
  const BooleanProgram p = lower_model(m);
  CHECK_FALSE(p.layers.back().folded);
  CHECK(p.layers.back().out_channels() == 2);
  CHECK_FALSE(p.warnings.empty());
}

TEST_CASE("hand-written program") {
  BooleanProgram p;
  p.group_size = 1;
  ChannelProgram diff;
  diff.pn.positive = {{2, 0, 0}};
  diff.pn.negative = {{0, 0, 0}};
  p.layers.push_back(stem_program({diff}));
  LayerProgram out;
  out.type = LayerType::Output;
  out.in_channels = 16;
  out.source = 0;
  ChannelProgram any;
  for (int i = 0; i < 16; ++i) any.pn.positive.push_back({i, 0, 0});
  out.channels = {any};
  p.layers.push_back(out);
  validate_program(p);

  BitTensor x(1);
  CHECK(run_program(p, x).first == Label::Random);
  x.set(2, 5, 0, 1);  // C_l' at bit 5
  CHECK(run_program(p, x).first == Label::Real);
  x.set(0, 5, 0, 1);
  CHECK(run_program(p, x).first == Label::Random);
  const ProgramTrace t = run_program_trace(p, x);
  CHECK(t.planes[0].size() == 16);
  CHECK(t.output_accumulator == 0);

  CHECK_THROWS_AS(run_program(p, BitTensor(2)), ValidationError);
  BooleanProgram bad = p;
  bad.layers[1].in_channels = 15;
  CHECK_THROWS_AS(validate_program(bad), ValidationError);
  bad = p;
  bad.layers[0].channels[0].pn.positive.push_back({7, 0, 0});
  CHECK_THROWS_AS(validate_program(bad), ValidationError);
  bad = p;
  bad.layers[0].channels[0].pn.negative.push_back({2, 0, 0});
  CHECK_THROWS_AS(validate_program(bad), ValidationError);
}

TEST_CASE("lowered random models match the loop oracle and the quantized forward pass") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const ModelF m = testing::random_quantized_model(small_config(), seed);
    const BooleanProgram p = lower_model(m);
    validate_program(p);
    CHECK(p.layers.back().folded);
    for (int i = 0; i < 50; ++i) {
      const BitTensor x = testing::random_bits(2, seed * 1000 + i);
      const auto o = testing::oracle_forward(m, x);
      const ProgramTrace t = run_program_trace(p, x);
      for (std::size_t l = 0; l < o.planes.size(); ++l) REQUIRE(t.planes[l] == o.planes[l]);
      REQUIRE(t.raw_bit == o.real);
    }
    const EquivalenceReport r = verify_equivalence(p, m, 512, 10);
    CHECK(r.passed);
    CHECK(r.counterexample.empty());
    CHECK(r.trials_run == 512);
  }
}

TEST_CASE("unfolded output and zero mode are also exact against the model") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelF m = testing::random_quantized_model(small_config(), 50 + seed, {.antisymmetric_output = false});
    const BooleanProgram p = lower_model(m);
    CHECK(verify_equivalence(p, m, 256, 10).passed);
  }
}

TEST_CASE("dropping a literal is caught exactly when it changes the unit") {
  int detected = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig cfg = small_config();
    cfg.channels = 8;
    const ModelF m = testing::random_quantized_model(cfg, 100 + seed);
    const BooleanProgram p = lower_model(m);
    for (int c = 0; c < p.layers[0].out_channels(); ++c) {
      const ChannelProgram& cp = p.layers[0].channels[static_cast<std::size_t>(c)];
      if (cp.pn.positive.empty()) continue;
      BooleanProgram mutated = p;
      ChannelProgram& mc = mutated.layers[0].channels[static_cast<std::size_t>(c)];
      mc.pn.positive.erase(mc.pn.positive.begin());
      std::vector<InputIndex> vars(cp.pn.positive);
      vars.insert(vars.end(), cp.pn.negative.begin(), cp.pn.negative.end());
      const bool changed = unit_table(cp, vars, false) != unit_table(mc, vars, false);
      const EquivalenceReport r = verify_equivalence(mutated, m, 64, 10);
      CHECK(r.passed == !changed);
      if (changed) {
        CHECK_FALSE(r.counterexample.empty());
        ++detected;
      }
    }
  }
  CHECK(detected > 0);
}

TEST_CASE("zero weights do not change the lowered program") {
  ModelF m = testing::random_quantized_model(small_config(), 17);
  const BooleanProgram before = lower_model(m);
  // push every zero code to a different value inside the dead zone
  for (Eigen::Index i = 0; i < m.head[0].dense.weight.size(); ++i) {
    float& w = m.head[0].dense.weight.data()[i];
    if (w == 0.0f) w = 0.3f * m.head[0].delta;
  }
  CHECK(lower_model(m) == before);
}

TEST_CASE("verification with no work passes vacuously with a warning") {
  const ModelF m = testing::random_quantized_model(small_config(), 1);
  const EquivalenceReport r = verify_equivalence(lower_model(m), m, 0, 0);
  CHECK(r.passed);
  CHECK_FALSE(r.warning.empty());
  CHECK(r.trials_run == 0);
}

TEST_CASE("program text round trip") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const ModelF m = testing::random_quantized_model(small_config(), seed, {.antisymmetric_output = seed % 2 == 0});
    const BooleanProgram p = lower_model(m);
    const std::string text = format_program(p);
    CHECK(text.rfind("BPROG v1", 0) == 0);
    const BooleanProgram back = parse_program(text);
    CHECK(back == p);
    CHECK(format_program(back) == text);
  }
}

TEST_CASE("malformed program text is rejected") {
  const ModelF m = testing::random_quantized_model(small_config(), 2);
  const std::string text = format_program(lower_model(m));
  CHECK_THROWS_AS(parse_program(""), IoError);
  CHECK_THROWS_AS(parse_program("BPROG v9\n"), IoError);
  CHECK_THROWS_AS(parse_program(text.substr(0, text.size() / 2)), IoError);
  std::string bad = text;
  const auto at = bad.find("theta=");
  REQUIRE(at != std::string::npos);
  bad.replace(at, 6, "theta=x");
  CHECK_THROWS_AS(parse_program(bad), IoError);
  // syntactically fine but an index is out of range
  std::string wide = text;
  const auto p = wide.find("P=[");
  REQUIRE(p != std::string::npos);
  wide.insert(p + 3, "999:0:0,");
  CHECK_THROWS_AS(parse_program(wide), ValidationError);
}

TEST_CASE("decision threshold can be moved after lowering") {
  const ModelF m = testing::random_quantized_model(small_config(), 12);
  BooleanProgram p = lower_model(m);
  ModelF shifted = m;
  shifted.config.decision_threshold = 0.3;
  set_decision_threshold(p, 0.3);
  CHECK(verify_equivalence(p, shifted, 256, 0).passed);
  CHECK_THROWS_AS(set_decision_threshold(p, 1.0), ValidationError);
}

TEST_CASE("zero mode equals folded mode on identity normalization") {
  ModelF m = testing::random_quantized_model(small_config(), 6);
  auto identity = [](auto& unit) {
    unit.bn = nn::BatchNorm<float>(unit.bn.channels());
    unit.bn.running_var.setConstant(1.0f - unit.bn.eps);
  };
  identity(m.stem);
  for (auto& blk : m.blocks)
    for (auto& u : blk) {
      identity(u);
      u.delta = 1.0f + u.delta;
      u.conv.weight = (u.conv.weight.array() / (u.delta - 1.0f) * u.delta).matrix();
    }
  for (auto& u : m.head) {
    u.dense.bias.setZero();
    identity(u);
  }
  m.output.dense.bias.setZero();
  BooleanProgram folded = lower_model(m, {.theta_mode = ThetaMode::Folded});
  BooleanProgram zero = lower_model(m, {.theta_mode = ThetaMode::Zero});
  // the folded form may additionally prune channels that can never fire
  for (int i = 0; i < 200; ++i) {
    const BitTensor x = testing::random_bits(2, 700 + i);
    REQUIRE(run_program_trace(folded, x).planes == run_program_trace(zero, x).planes);
  }
  for (std::size_t l = 0; l < zero.layers.size(); ++l)
    for (const auto& cp : zero.layers[l].channels) {
      CHECK(cp.theta == 0);
      CHECK_FALSE(cp.sign_flip);
    }
  CHECK(verify_equivalence(zero, m, 256, 10).passed);
}

TEST_CASE("lowering requires a fully quantized model") {
  CHECK_THROWS_AS(lower_model(ModelF::build(small_config(), 1)), ValidationError);
}
