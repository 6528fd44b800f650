#include <gtest/gtest.h>

#include <cmath>

#include "fancgan/error.hpp"
#include "fancgan/ops.hpp"
#include "gradcheck.hpp"
#include "fixtures.hpp"

using namespace fancgan;
using fancgan::testing::gradcheck;
using fancgan::testing::random_tensor;

namespace {

// Weighted sum so every output element gets a distinct upstream gradient.
Var weighted_sum(const Var& y, std::uint64_t seed = 99) {
  return ops::sum(ops::mul(y, constant(random_tensor(y.shape(), seed))));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autograd, AccumulatesThroughSharedNodes) {
  Var x(Tensor({1}, 3.0), true);
  Var y = ops::add(ops::mul(x, x), x);  // x^2 + x
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Autograd, DetachBlocksGradient) {
  Var x(Tensor({2}, 1.5), true);
  Var y = ops::sum(ops::mul(detach(x), x));
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.5);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.5);
}

TEST(Autograd, ConstantNeverReceivesGrad) {
  Var c = constant(Tensor({3}, 2.0));
  Var x(Tensor({3}, 1.0), true);
  ops::sum(ops::mul(c, x)).backward();
  EXPECT_FALSE(c.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Autograd, ZeroGradClears) {
  Var x(Tensor({1}, 2.0), true);
  ops::mul(x, x).backward();
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad().item(), 0.0);
}

TEST(Ops, ShapeMismatchThrows) {
  Var a(Tensor({2, 3}), true), b(Tensor({3, 2}), true);
  EXPECT_THROW(ops::add(a, b), ShapeError);
}

TEST(Ops, ConvOutputSize) {
  EXPECT_EQ(ops::conv_output_size(256, 4, 2, 1), 128);
  EXPECT_EQ(ops::conv_output_size(32, 4, 1, 1), 31);
  EXPECT_EQ(ops::conv_output_size(8, 3, 1, 1), 8);
}

TEST(Ops, Conv2dMatchesDirectSum) {
  const Tensor x = random_tensor({1, 2, 5, 5}, 1);
  const Tensor w = random_tensor({3, 2, 3, 3}, 2);
  const Tensor b = random_tensor({3}, 3);
  const Var y = ops::conv2d(constant(x), constant(w), constant(b), 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = b[o];
        for (int c = 0; c < 2; ++c)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const int yy = i * 2 - 1 + u, xx = j * 2 - 1 + v;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
              acc += w[((o * 2 + c) * 3 + u) * 3 + v] * x.at(0, c, yy, xx);
            }
        EXPECT_NEAR(y.value().at(0, o, i, j), acc, 1e-12);
      }
}

TEST(OpsGrad, Conv2d) {
  Var x(random_tensor({2, 2, 6, 6}, 1), true);
  Var w(random_tensor({3, 2, 3, 3}, 2), true);
  Var b(random_tensor({3}, 3), true);
  for (int stride : {1, 2}) {
    auto r = gradcheck([&] { return weighted_sum(ops::conv2d(x, w, b, stride, 1)); },
                       {{"x", &x}, {"w", &w}, {"b", &b}});
    EXPECT_LT(r.relative_error, kTol) << r.worst << " stride " << stride;
  }
}

TEST(OpsGrad, Linear) {
  Var x(random_tensor({3, 4}, 1), true);
  Var w(random_tensor({5, 4}, 2), true);
  Var b(random_tensor({5}, 3), true);
  auto r = gradcheck([&] { return weighted_sum(ops::linear(x, w, b)); }, {{"x", &x}, {"w", &w}, {"b", &b}});
  EXPECT_LT(r.relative_error, kTol) << r.worst;
}

TEST(OpsGrad, Elementwise) {
  Var x(random_tensor({2, 3, 4, 4}, 5), true);
  Var y(random_tensor({2, 3, 4, 4}, 6), true);
  const std::vector<NamedParam> in{{"x", &x}, {"y", &y}};
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::sub(ops::mul(x, y), ops::scale(y, 0.3))); }, in)
                .relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::leaky_relu(x, 0.2)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::sigmoid(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::tanh(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::elu_plus_one(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return ops::mean(ops::add_scalar(x, 2.0)); }, in).relative_error, kTol);
}

TEST(OpsGrad, NormalizationAndAffine) {
  Var x(random_tensor({2, 3, 4, 4}, 7), true);
  Var g(random_tensor({2, 3}, 8), true);
  Var b(random_tensor({2, 3}, 9), true);
  Var s(random_tensor({3}, 10), true);
  const Tensor noise = random_tensor({2, 1, 4, 4}, 11);
  const std::vector<NamedParam> in{{"x", &x}, {"g", &g}, {"b", &b}, {"s", &s}};
  auto r = gradcheck(
      [&] {
        return weighted_sum(ops::add_channel_noise(ops::channel_affine(ops::instance_norm(x, 1e-5), g, b), s, noise));
      },
      in);
  EXPECT_LT(r.relative_error, kTol) << r.worst;
}

TEST(OpsGrad, Resampling) {
  Var x(random_tensor({1, 2, 4, 4}, 12), true);
  const std::vector<NamedParam> in{{"x", &x}};
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::upsample_nearest2x(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::maxpool2x2(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::avgpool2x2(x)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::global_avg_pool(x)); }, in).relative_error, kTol);
}

TEST(OpsGrad, ChannelPlumbing) {
  Var a(random_tensor({1, 2, 3, 3}, 13), true);
  Var b(random_tensor({1, 1, 3, 3}, 14), true);
  Var r(random_tensor({2, 6}, 15), true);
  const std::vector<NamedParam> in{{"a", &a}, {"b", &b}, {"r", &r}};
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::concat_channels(a, b)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::repeat_channels(b, 3)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::spatial_gate(a, b)); }, in).relative_error, kTol);
  EXPECT_LT(gradcheck([&] { return weighted_sum(ops::slice_cols(r, 2, 3)); }, in).relative_error, kTol);
}

TEST(OpsGrad, LinearAttention) {
  Var q(random_tensor({1, 2, 3, 3}, 16, 0.1, 1.0), true);
  Var k(random_tensor({1, 2, 3, 3}, 17, 0.1, 1.0), true);
  Var v(random_tensor({1, 3, 3, 3}, 18), true);
  auto r = gradcheck([&] { return weighted_sum(ops::linear_attention(q, k, v)); },
                     {{"q", &q}, {"k", &k}, {"v", &v}});
  EXPECT_LT(r.relative_error, kTol) << r.worst;
}

TEST(Ops, LinearAttentionMatchesQuadraticForm) {
  const Tensor q = random_tensor({1, 2, 2, 3}, 20, 0.1, 1.0);
  const Tensor k = random_tensor({1, 2, 2, 3}, 21, 0.1, 1.0);
  const Tensor v = random_tensor({1, 2, 2, 3}, 22);
  const Tensor out = ops::linear_attention(constant(q), constant(k), constant(v), 0.0).value();
  const int P = 6;
  for (int p = 0; p < P; ++p) {
    double denom = 0.0;
    std::vector<double> num(2, 0.0);
    for (int j = 0; j < P; ++j) {
      double s = 0.0;
      for (int d = 0; d < 2; ++d) s += k[d * P + j] * q[d * P + p];
      denom += s;
      for (int c = 0; c < 2; ++c) num[c] += s * v[c * P + j];
    }
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(out[c * P + p], num[c] / denom, 1e-12);
  }
}

TEST(Ops, InstanceNormStandardizes) {
  const Tensor x = random_tensor({2, 3, 8, 8}, 30, -4.0, 9.0);
  const Tensor y = ops::instance_norm(constant(x), 0.0).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      for (int i = 0; i < 64; ++i) m += y[(n * 3 + c) * 64 + i];
      m /= 64;
      for (int i = 0; i < 64; ++i) v += std::pow(y[(n * 3 + c) * 64 + i] - m, 2);
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v / 64, 1.0, 1e-10);
    }
}
