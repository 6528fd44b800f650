#include <gtest/gtest.h>

#include <cmath>

#include "fancgan/error.hpp"
#include "fancgan/networks.hpp"
#include "fancgan/ops.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace fancgan;
using fancgan::testing::gradcheck;
using fancgan::testing::random_tensor;

namespace {

Var weighted_sum(const Var& y, std::uint64_t seed = 5) {
  return ops::sum(ops::mul(y, constant(random_tensor(y.shape(), seed))));
}

Tensor binary_mask(int n, int size, std::uint64_t seed) {
  Tensor t = random_tensor({n, 1, size, size}, seed, 0.0, 1.0);
  for (auto& v : t.storage()) v = v > 0.5 ? 1.0 : 0.0;
  return t;
}

constexpr double kNetTol = 1e-4;

}  // namespace

TEST(Mapping, OutputShapeAndLinearLastLayer) {
  std::mt19937_64 rng(1);
  auto net = nn::make_mapping_network(6, 5, 3, rng);
  EXPECT_EQ(net.latent_dim(), 6);
  EXPECT_EQ(net.style_dim(), 5);
  const Var w = nn::mapping_network(constant(random_tensor({4, 6}, 2)), net);
  EXPECT_EQ(w.shape(), (Shape{4, 5}));
  // A linear last layer produces negative values that a leaky layer would shrink.
  EXPECT_LT(w.value().min(), 0.0);
}

TEST(AdaIN, MatchesStyleStatistics) {
  std::mt19937_64 rng(3);
  const int c = 4;
  for (int trial = 0; trial < 20; ++trial) {
    auto affine = nn::make_linear(6, 2 * c, rng);
    const Var style = constant(Tensor::randn({1, 6}, rng));
    const Var x = constant(Tensor::uniform({1, c, 8, 8}, rng, -3.0, 5.0));
    const Tensor y = nn::adain(x, style, affine).value();
    const Tensor params = affine(style).value();
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0, v = 0.0;
      for (int i = 0; i < 64; ++i) m += y[ch * 64 + i];
      m /= 64;
      for (int i = 0; i < 64; ++i) v += std::pow(y[ch * 64 + i] - m, 2);
      EXPECT_NEAR(m, params[c + ch], 1e-9);
      EXPECT_NEAR(std::sqrt(v / 64), std::abs(params[ch]), 1e-4);
    }
  }
}

TEST(AdaIN, RejectsMismatchedAffine) {
  std::mt19937_64 rng(4);
  auto affine = nn::make_linear(3, 6, rng);
  EXPECT_THROW(nn::adain(constant(Tensor({1, 4, 4, 4})), constant(Tensor({1, 3})), affine), ShapeError);
}

TEST(StyleBlend, AssignsLevels) {
  std::vector<Var> styles{constant(Tensor({1, 2}, 1.0)), constant(Tensor({1, 2}, 2.0))};
  const auto out = nn::style_blend(styles, {{0, 0}, {1, 1}, {2, 1}}, 3);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].value()[0], 1.0);
  EXPECT_EQ(out[2].value()[0], 2.0);
  const auto b = nn::broadcast_assignment(3);
  for (const auto& [level, idx] : b) EXPECT_EQ(idx, 0);
  EXPECT_THROW(nn::style_blend(styles, {{0, 2}}, 1), ValidationError);
}

TEST(StyleUNet, ShapeRangeAndDeterminism) {
  std::mt19937_64 rng(10);
  nn::StyleUNet g({2, 4, 8, 8, 2, 1e-5, 0.2}, rng);
  const Var mask = constant(binary_mask(2, 16, 11));
  const Tensor z = random_tensor({2, 8}, 12);
  const Tensor a = g.forward(mask, z, 77).value();
  EXPECT_EQ(a.shape(), (Shape{2, 1, 16, 16}));
  EXPECT_LE(a.max(), 1.0);
  EXPECT_GE(a.min(), -1.0);
  EXPECT_EQ(a, g.forward(mask, z, 77).value());
}

TEST(StyleUNet, LatentChangesOutput) {
  std::mt19937_64 rng(13);
  nn::StyleUNet g({2, 4, 8, 8, 2, 1e-5, 0.2}, rng);
  const Var mask = constant(binary_mask(1, 16, 14));
  const Tensor a = g.forward(mask, random_tensor({1, 8}, 1), 3).value();
  const Tensor b = g.forward(mask, random_tensor({1, 8}, 2), 3).value();
  EXPECT_NE(a, b);
}

TEST(StyleUNet, RejectsIndivisibleInput) {
  std::mt19937_64 rng(15);
  nn::StyleUNet g({2, 4, 8, 8, 2, 1e-5, 0.2}, rng);
  EXPECT_THROW(g.forward(constant(Tensor({1, 1, 10, 10})), Tensor({1, 8}), 0), ConfigError);
  EXPECT_THROW(g.forward(constant(Tensor({1, 2, 8, 8})), Tensor({1, 8}), 0), ShapeError);
}

TEST(StyleUNet, CloneIsIndependent) {
  std::mt19937_64 rng(16);
  nn::StyleUNet g({2, 4, 8, 8, 2, 1e-5, 0.2}, rng);
  nn::StyleUNet c = g.clone();
  c.head.weight.mutable_value()[0] += 1.0;
  EXPECT_NE(c.head.weight.value(), g.head.weight.value());
}

TEST(AttentionGate, CoefficientsInUnitIntervalAndUpsampledGate) {
  std::mt19937_64 rng(20);
  auto gate = nn::make_attention_gate(3, 5, 2, rng);
  const Var skip = constant(random_tensor({1, 3, 8, 8}, 21));
  const Var g = constant(random_tensor({1, 5, 4, 4}, 22));
  const Tensor a = nn::attention_coefficients(skip, g, gate).value();
  EXPECT_EQ(a.shape(), (Shape{1, 1, 8, 8}));
  EXPECT_GT(a.min(), 0.0);
  EXPECT_LT(a.max(), 1.0);
  const Tensor out = nn::attention_gate(skip, g, gate).value();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(out[c * 64 + i], skip.value()[c * 64 + i] * a[i], 1e-15);
  EXPECT_THROW(nn::attention_gate(skip, constant(Tensor({1, 5, 3, 3})), gate), ShapeError);
}

TEST(AttentionUNet, ProbabilitiesAndShape) {
  std::mt19937_64 rng(23);
  nn::AttentionUNet f({2, 4, 0.2}, rng);
  const Tensor p = f.forward(constant(random_tensor({2, 1, 16, 16}, 24))).value();
  EXPECT_EQ(p.shape(), (Shape{2, 1, 16, 16}));
  EXPECT_GE(p.min(), 0.0);
  EXPECT_LE(p.max(), 1.0);
}

TEST(LinearAttention, ZeroOutputProjectionIsIdentity) {
  std::mt19937_64 rng(25);
  auto block = nn::make_linear_attention(4, rng);
  block.out.weight.mutable_value().fill(0.0);
  if (block.out.bias.defined()) block.out.bias.mutable_value().fill(0.0);
  const Var x = constant(random_tensor({1, 4, 5, 5}, 26));
  EXPECT_EQ(nn::residual_linear_attention(x, block).value(), x.value());
}

TEST(PatchDiscriminator, ScoreMapFor256Input) {
  std::mt19937_64 rng(30);
  nn::PatchDiscriminator d({4, 3, 4, 8, 0.2, 1e-5}, rng);
  const auto size = d.output_size(256, 256);
  EXPECT_EQ(size.height, 30);
  EXPECT_EQ(size.width, 30);
}

TEST(PatchDiscriminator, ForwardShapeAndTooSmallInput) {
  std::mt19937_64 rng(31);
  nn::PatchDiscriminator d({4, 2, 4, 8, 0.2, 1e-5}, rng);
  const Var out = d.forward(constant(random_tensor({2, 1, 32, 32}, 32)));
  EXPECT_EQ(out.shape(), (Shape{2, 1, 6, 6}));
  EXPECT_THROW(d.output_size(4, 4), ConfigError);
}

TEST(NetworksGrad, StyleUNet) {
  std::mt19937_64 rng(40);
  nn::StyleUNet g({2, 2, 4, 4, 2, 1e-5, 0.2}, rng);
  // Non-zero noise scales so their gradient path is exercised.
  for (auto& lvl : g.decoder) lvl.noise_scales.mutable_value().fill(0.3);
  Var mask(binary_mask(1, 8, 41), true);
  const Tensor z = random_tensor({1, 4}, 42);
  auto params = g.parameters();
  params.push_back({"mask", &mask});
  auto r = gradcheck([&] { return weighted_sum(g.forward(mask, z, 9)); }, params);
  EXPECT_LT(r.relative_error, kNetTol) << r.worst << " |a|=" << r.worst_analytic_norm << " |n|=" << r.worst_numeric_norm;
}

TEST(NetworksGrad, AttentionUNet) {
  std::mt19937_64 rng(43);
  nn::AttentionUNet f({2, 2, 0.2}, rng);
  Var image(random_tensor({1, 1, 8, 8}, 44), true);
  auto params = f.parameters();
  params.push_back({"image", &image});
  auto r = gradcheck([&] { return weighted_sum(f.forward(image)); }, params);
  EXPECT_LT(r.relative_error, kNetTol) << r.worst << " |a|=" << r.worst_analytic_norm << " |n|=" << r.worst_numeric_norm;
}

TEST(NetworksGrad, PatchDiscriminator) {
  std::mt19937_64 rng(45);
  nn::PatchDiscriminator d({2, 1, 4, 8, 0.2, 1e-5}, rng);
  Var image(random_tensor({1, 1, 8, 8}, 46), true);
  auto params = d.parameters();
  params.push_back({"image", &image});
  auto r = gradcheck([&] { return weighted_sum(d.forward(image)); }, params);
  EXPECT_LT(r.relative_error, kNetTol) << r.worst << " |a|=" << r.worst_analytic_norm << " |n|=" << r.worst_numeric_norm;
}
