#include <doctest.h>

#include "gradcheck.hpp"
#include "gradient_trials.hpp"
#include "lwnd/nn/activation.hpp"
#include "lwnd/nn/adam.hpp"
#include "lwnd/nn/batchnorm.hpp"
#include "lwnd/nn/conv.hpp"
#include "lwnd/nn/dense.hpp"
#include "lwnd/rng.hpp"

using namespace lwnd::nn;
using testing::MatrixD;

namespace {

constexpr double kTolerance = 1e-3;
BatchNormCache<double>* const kNoCache = nullptr;

MatrixD random_matrix(Eigen::Index r, Eigen::Index c, lwnd::SplitMix64& rng, double scale = 1.0) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2 * rng.next_unit() - 1);
  return m;
}

}  // namespace

TEST_CASE("backward passes match central differences over 50 random trials") {
  lwnd::SplitMix64 rng(2718);
  for (int trial = 0; trial < 50; ++trial) {
    const testing::GradientTrial t = testing::gradient_trial(rng);
    CAPTURE(trial);
    CAPTURE(t.worst);
    CHECK(t.max_error < kTolerance);
  }
}

TEST_CASE("im2col matches a direct convolution") {
  lwnd::SplitMix64 rng(4);
  Conv2d<double> conv(2, 3, 3, 1);
  conv.weight = random_matrix(3, 18, rng);
  FeatureMap<double> x(random_matrix(2, 2 * 4 * 3, rng), 4, 3);
  const FeatureMap<double> y = conv2d_forward(conv, x);
  for (int b = 0; b < 2; ++b)
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0;
          for (int c = 0; c < 2; ++c)
            for (int a = 0; a < 3; ++a)
              for (int e = 0; e < 3; ++e) {
                const int ii = i + a - 1, jj = j + e - 1;
                if (ii >= 0 && ii < 4 && jj >= 0 && jj < 3) s += conv.weight(o, (c * 3 + a) * 3 + e) * x.at(c, b, ii, jj);
              }
          CHECK(y.at(o, b, i, j) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("batch norm running statistics and inference") {
  BatchNorm<double> bn(1);
  MatrixD x(1, 4);
  x << 1, 2, 3, 4;
  const MatrixD y = batchnorm_forward_train(bn, x, kNoCache);
  CHECK(y.sum() == doctest::Approx(0).epsilon(1e-12));
  CHECK(bn.running_mean(0) == doctest::Approx(0.25));
  // unbiased variance 5/3
  CHECK(bn.running_var(0) == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
  bn.running_mean(0) = 2;
  bn.running_var(0) = 4 - bn.eps;
  const MatrixD z = batchnorm_forward_infer(bn, x);
  CHECK(z(0, 3) == doctest::Approx(1.0));
  MatrixD single(1, 1);
  single << 3;
  CHECK_THROWS_AS(batchnorm_forward_train(bn, single, kNoCache), lwnd::ValidationError);
}

TEST_CASE("shape errors are rejected") {
  Dense<double> d(3, 2);
  CHECK_THROWS_AS(dense_forward(d, MatrixD(MatrixD::Zero(4, 1))), lwnd::ValidationError);
  Conv2d<double> c(2, 2, 3, 1);
  CHECK_THROWS_AS(conv2d_forward(c, FeatureMap<double>(3, 1, 4, 4)), lwnd::ValidationError);
  CHECK_THROWS_AS(softmax_cross_entropy(MatrixD(MatrixD::Zero(3, 2)), {0, 1}), lwnd::ValidationError);
}

TEST_CASE("adam minimizes a quadratic") {
  MatrixD p(1, 2);
  p << 3, -2;
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.05;
  for (int i = 0; i < 2000; ++i) {
    const MatrixD g = 2 * p;
    adam_step(p, g, st, cfg);
  }
  CHECK(p.norm() < 1e-2);
  CHECK(st.step == 2000);
}

TEST_CASE("softmax cross-entropy stays finite for saturated logits") {
  MatrixD z(2, 1);
  z << 800, -800;
  const auto r = softmax_cross_entropy(z, {1});
  CHECK(std::isfinite(r.value));
  CHECK(r.value == doctest::Approx(1600));
}
