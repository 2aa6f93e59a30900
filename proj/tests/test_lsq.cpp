#include <doctest.h>

#include <cmath>

#include "lwnd/errors.hpp"
#include "lwnd/lsq.hpp"
#include "lwnd/rng.hpp"

using namespace lwnd;
using namespace lwnd::lsq;
using M = nn::Matrix<float>;

namespace {

// Written from the definition: nearest integer (halves away from zero), clipped to [-1, 1].
float oracle_quantize(float w, float delta) {
  const double q = w / delta;
  double r = std::floor(std::fabs(q) + 0.5);
  if (q < 0) r = -r;
  r = std::min(1.0, std::max(-1.0, r));
  return static_cast<float>(r) * delta;
}

}  // namespace

TEST_CASE("ternary quantizer on a million random weights") {
  SplitMix64 rng(77);
  const Eigen::Index n = 1'000'000;
  M w(1000, 1000);
  for (Eigen::Index i = 0; i < n; ++i) w.data()[i] = static_cast<float>(4 * rng.next_unit() - 2);
  const float delta = 0.37f;
  const M q = quantize_weights(w, delta);
  long failures = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const float v = q.data()[i];
    if (v != oracle_quantize(w.data()[i], delta)) ++failures;
    if (!(v == 0.0f || v == delta || v == -delta)) ++failures;
  }
  CHECK(failures == 0);
  CHECK(quantize_weights(q, delta) == q);
  const M codes = ternary_codes(w, delta);
  CHECK(code_entropy_bits(codes) <= std::log2(3.0) + 1e-12);
  CHECK(code_entropy_bits(codes) > 1.0);
}

TEST_CASE("pointwise quantizer values") {
  CHECK(ternary_code(0.49f, 1.0f) == 0);
  CHECK(ternary_code(0.5f, 1.0f) == 1);
  CHECK(ternary_code(-0.5f, 1.0f) == -1);
  CHECK(ternary_code(7.0f, 1.0f) == 1);
  CHECK(ternary_code(-7.0f, 1.0f) == -1);
  CHECK(ternary_code(0.0f, 1.0f) == 0);
  M w(1, 4);
  w << 0.2f, 0.6f, -1.4f, 3.0f;
  M expected(1, 4);
  expected << 0.0f, 0.5f, -0.5f, 0.5f;
  CHECK(quantize_weights(w, 0.5f) == expected);
}

TEST_CASE("quantizer preconditions") {
  M w = M::Ones(2, 2);
  CHECK_THROWS_AS(quantize_weights(w, 0.0f), ValidationError);
  CHECK_THROWS_AS(quantize_weights(w, 1.0f, 2), ValidationError);
  CHECK_THROWS_AS(extract_ternary(w, 0.0f, LayerKind::Dense, 2, 1, 0), ValidationError);
  CHECK_THROWS_AS(extract_ternary(w, 1.0f, LayerKind::Conv, 3, 1, 0), ValidationError);
}

TEST_CASE("step-size gradient") {
  M w(1, 5), g = M::Ones(1, 5);
  w << 0.3f, 0.7f, 1.5f, -2.0f, -0.7f;
  // in range: -v + round(v); saturated: -1 / +1
  const double expected = (-0.3 + 0) + (-0.7 + 1) + 1 + (-1) + (0.7 - 1);
  CHECK(step_size_grad(w, 1.0f, g, 1.0f) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(step_size_grad(w, 1.0f, g, 0.5f) == doctest::Approx(0.5 * expected).epsilon(1e-6));
  M g2 = g;
  g2(0, 2) = 3.0f;
  CHECK(step_size_grad(w, 1.0f, g2, 1.0f) == doctest::Approx(expected + 2.0).epsilon(1e-6));
  CHECK(default_grad_scale(100) == doctest::Approx(0.1));
}

TEST_CASE("straight-through estimators") {
  M g(1, 3);
  g << 1, -2, 3;
  CHECK(ste_weight_grad(g) == g);
  M x(1, 3);
  x << -1.5f, 0.0f, 0.9f;
  M expected_fwd(1, 3);
  expected_fwd << 0, 0, 1;
  CHECK(binarize_activation(x) == expected_fwd);
  M expected_bwd(1, 3);
  expected_bwd << 0, -2, 3;
  CHECK(binarize_backward(x, g) == expected_bwd);
}

TEST_CASE("step size initialization and projection") {
  M w(1, 4);
  w << 1, -1, 2, -2;
  CHECK(initial_step_size(w) == doctest::Approx(3.0f));
  CHECK(initial_step_size(M(M::Zero(2, 2))) > 0.0f);
  CHECK(project_step_size(-1.0f) == doctest::Approx(1e-6f));
  CHECK(project_step_size(0.5f) == 0.5f);
}

TEST_CASE("schedule and stage names") {
  QuantSchedule s{2, 3, 4};
  CHECK(s.total_epochs() == 9);
  CHECK(s.stage_for_epoch(0) == QuantStage::FullPrecision);
  CHECK(s.stage_for_epoch(2) == QuantStage::Weights);
  CHECK(s.stage_for_epoch(5) == QuantStage::Full);
  for (auto st : {QuantStage::FullPrecision, QuantStage::Weights, QuantStage::Full}) CHECK(parse_stage(to_string(st)) == st);
  CHECK_THROWS_AS(parse_stage("int8"), ValidationError);
}

TEST_CASE("extract_ternary geometry") {
  M w(2, 18);
  w.setZero();
  w(0, 0) = 1;
  w(1, 17) = -1;
  const TernaryLayer t = extract_ternary(w, 1.0f, LayerKind::Conv, 2, 3, 1);
  CHECK(t.out_channels() == 2);
  CHECK(t.fan_in() == 18);
  CHECK(t.nonzeros() == 2);
  CHECK(t.codes(1, 17) == -1);
  CHECK_FALSE(t.dead());
}
