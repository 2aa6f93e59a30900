#include <doctest.h>

#include <numeric>

#include "lwnd/opcount.hpp"
#include "support.hpp"

using namespace lwnd;
using namespace lwnd::opcount;

TEST_CASE("per-layer counting rules") {
  const LayerShape conv{lsq::LayerKind::Conv, 32, 32, 3, 128, Component::Residual};
  const OpCounts d = count_dense_layer(conv);
  CHECK(d.mults == 9216 * 128);
  CHECK(d.adds == (9216 - 32) * 128);

  // one residual output channel with 21 nonzeros
  const std::vector<int> one{21};
  const OpCounts lw = count_lightweight_layer(std::span<const int>(one), 128);
  CHECK(lw.bools == 2688);
  CHECK(lw.adds == 2560);
  CHECK(lw.indicators == 128);
  CHECK(lw.mults == 0);

  const std::vector<int> with_dead{3, 0, 1};
  const OpCounts a = count_lightweight_layer(std::span<const int>(with_dead), 2);
  CHECK(a == OpCounts{0, (2 + 0) * 2, 4 * 2, 2 * 2});
  CHECK(count_lightweight_layer(std::span<const int>(with_dead), 2, true).indicators == 6);
}

TEST_CASE("dense counts of the g = 8 architecture") {
  const CountReport r = count_dense(ModelConfig{});
  REQUIRE(r.components.size() == 4);
  CHECK(r.components[0].counts == OpCounts{16384, 12288, 0, 0});
  CHECK(r.components[1].counts == OpCounts{2359296, 2351104, 0, 0});
  CHECK(r.components[2].counts == OpCounts{266240, 266112, 0, 0});
  CHECK(r.components[3].counts == OpCounts{128, 126, 0, 0});
  CHECK(r.total.mults == 2642048);
  CHECK(r.total.adds == 2629630);
}

TEST_CASE("reference sparsity fixture") {
  const auto fixture = reference_sparsity_fixture();
  const CountReport lw = count_lightweight(fixture);
  CHECK(lw.total.bools == 367221);
  CHECK(lw.total.adds == 358417);
  CHECK(lw.total.indicators == 8804);
  CHECK(lw.components[0].counts == OpCounts{0, 512, 1024, 512});
  CHECK(lw.components[3].counts == OpCounts{0, 63, 64, 1});
  const CountReport with_dead = count_lightweight(fixture, {.count_dead_indicators = true});
  CHECK(with_dead.total.indicators == 8833);
  CHECK(with_dead.components[2].counts.bools == 13877);
  CHECK(with_dead.components[2].counts.adds == 13778);
  CHECK(with_dead.components[2].counts.indicators == 128);
  const double q = ratio(with_dead, count_dense(ModelConfig{}));
  CHECK(q == doctest::Approx(0.139).epsilon(0.001 / 0.139));
}

TEST_CASE("counts of a lowered program agree with the per-layer rules") {
  ModelConfig cfg;
  cfg.group_size = 2;
  cfg.channels = 4;
  cfg.dense_sizes = {8, 8};
  const ModelF m = testing::random_quantized_model(cfg, 3);
  const lowering::BooleanProgram p = lowering::lower_model(m);
  const CountReport lw = count_lightweight(p);
  long nnz = 0;
  for (const auto& L : p.layers) nnz += L.nonzeros();
  CHECK(lw.total.bools == [&] {
    long b = 0;
    for (const auto& s : sparsity_profile(p)) b += s.D * std::accumulate(s.nonzeros.begin(), s.nonzeros.end(), 0L);
    return b;
  }());
  CHECK(lw.total.mults == 0);
  CHECK(count_dense(layer_shapes(p)).total == count_dense(cfg).total);
  CHECK(nnz > 0);
}

TEST_CASE("an all-zero program costs nothing but its output comparison") {
  std::vector<LayerSparsity> empty{{Component::Conv0, 32, std::vector<int>(4, 0)},
                                   {Component::Head, 1, std::vector<int>(8, 0)},
                                   {Component::Output, 1, {0}}};
  const CountReport r = count_lightweight(empty);
  CHECK(r.total.bools == 0);
  CHECK(r.total.adds == 0);
  CHECK(r.total.indicators == 0);
  CHECK(count_lightweight(empty, {.count_dead_indicators = true}).total.indicators == 8);
}

TEST_CASE("report formatting") {
  const CountReport d = count_dense(ModelConfig{});
  const CountReport lw = count_lightweight(reference_sparsity_fixture(), {.count_dead_indicators = true});
  const std::string csv = format_csv(d, lw);
  CHECK(csv.rfind("component,mults,adds,bools,indicators\n", 0) == 0);
  CHECK(csv.find("dense/total,2642048,2629630,0,0") != std::string::npos);
  CHECK(csv.find("lightweight/total,0,358417,367221,8833") != std::string::npos);
  CHECK(format_table(d, lw).find("0.139") != std::string::npos);
}
