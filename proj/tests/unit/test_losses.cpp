#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fancgan/error.hpp"
#include "fancgan/losses.hpp"
#include "fancgan/ops.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace fancgan;
using fancgan::testing::gradcheck;
using fancgan::testing::random_tensor;

namespace {

Tensor random_mask(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, 0.0, 1.0);
  for (auto& v : t.storage()) v = v > 0.6 ? 1.0 : 0.0;
  return t;
}

double bce_oracle(const Tensor& p, const Tensor& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
    acc += -(y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
  }
  return acc / static_cast<double>(p.size());
}

double dice_oracle(const Tensor& p, const Tensor& y, double smooth) {
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * y[i];
    sp += p[i];
    sy += y[i];
  }
  return 1.0 - (2.0 * inter + 2.0 * smooth) / (sp + sy + 2.0 * smooth);
}

}  // namespace

TEST(FocalCE, ReducesToBinaryCrossEntropy) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor p = random_tensor({2, 1, 6, 6}, s, 0.0, 1.0);
    const Tensor y = random_mask({2, 1, 6, 6}, s + 100);
    EXPECT_NEAR(loss::focal_ce(constant(p), y, 1.0, 0.0).value().item(), bce_oracle(p, y), 1e-10);
  }
}

TEST(FocalCE, SinglePixelExample) {
  const double v = loss::focal_ce(constant(Tensor({1, 1, 1, 1}, 0.5)), Tensor({1, 1, 1, 1}, 1.0), 0.25, 2.0)
                       .value().item();
  EXPECT_NEAR(v, 0.043321, 1e-6);
}

TEST(FocalCE, DownWeightsEasyPixels) {
  const Tensor y({1, 1, 1, 1}, 1.0);
  const double easy_ce = loss::focal_ce(constant(Tensor({1, 1, 1, 1}, 0.95)), y, 1.0, 0.0).value().item();
  const double easy_focal = loss::focal_ce(constant(Tensor({1, 1, 1, 1}, 0.95)), y, 1.0, 2.0).value().item();
  const double hard_ce = loss::focal_ce(constant(Tensor({1, 1, 1, 1}, 0.1)), y, 1.0, 0.0).value().item();
  const double hard_focal = loss::focal_ce(constant(Tensor({1, 1, 1, 1}, 0.1)), y, 1.0, 2.0).value().item();
  EXPECT_LT(easy_focal / easy_ce, hard_focal / hard_ce);
}

TEST(FocalCE, FiniteAtSaturatedPredictions) {
  const Tensor p({1, 1, 2, 1}, std::vector<double>{0.0, 1.0});
  const Tensor y({1, 1, 2, 1}, std::vector<double>{1.0, 0.0});
  const Var v = loss::focal_ce(Var(p, true), y, 0.25, 2.0);
  EXPECT_TRUE(std::isfinite(v.value().item()));
  v.backward();
}

TEST(Tversky, HalfWeightsIsSoftDice) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor p = random_tensor({2, 1, 5, 5}, s, 0.0, 1.0);
    const Tensor y = random_mask({2, 1, 5, 5}, s + 50);
    for (double smooth : {0.0, 1.0}) {
      EXPECT_NEAR(loss::tversky_loss(constant(p), y, 0.5, 0.5, smooth).value().item(),
                  dice_oracle(p, y, smooth), 1e-10);
    }
  }
}

TEST(Tversky, CountsExample) {
  // TP = 2, FP = 1, FN = 1 with hard predictions.
  const Tensor p({1, 1, 1, 5}, std::vector<double>{1, 1, 1, 0, 0});
  const Tensor y({1, 1, 1, 5}, std::vector<double>{1, 1, 0, 1, 0});
  EXPECT_NEAR(loss::tversky_loss(constant(p), y, 0.4, 0.6, 0.0).value().item(), 1.0 / 3.0, 1e-9);
}

TEST(Tversky, FocalExponentAndRange) {
  const Tensor p = random_tensor({1, 1, 4, 4}, 3, 0.0, 1.0);
  const Tensor y = random_mask({1, 1, 4, 4}, 4);
  const double plain = loss::tversky_loss(constant(p), y, 0.3, 0.7, 1.0).value().item();
  const double focal = loss::tversky_loss(constant(p), y, 0.3, 0.7, 1.0, 0.75).value().item();
  EXPECT_GE(plain, 0.0);
  EXPECT_LE(plain, 1.0);
  EXPECT_NEAR(focal, std::pow(plain, 0.75), 1e-12);
  EXPECT_NEAR(loss::tversky_loss(constant(y), y, 0.4, 0.6, 1.0).value().item(), 0.0, 1e-12);
}

TEST(SegmentationLoss, WeightedSum) {
  const Tensor p = random_tensor({1, 1, 4, 4}, 5, 0.0, 1.0);
  const Tensor y = random_mask({1, 1, 4, 4}, 6);
  loss::LossConfig c;
  c.lambda1 = 0.7;
  c.lambda2 = 1.9;
  const double expect = 0.7 * loss::focal_ce(constant(p), y, c.alpha_t, c.gamma).value().item() +
                        1.9 * loss::tversky_loss(constant(p), y, c.tversky_alpha, c.tversky_beta, c.smooth,
                                                 c.tversky_gamma).value().item();
  EXPECT_NEAR(loss::segmentation_loss(constant(p), y, c).value().item(), expect, 1e-12);
}

TEST(LossConfig, ValidateRejectsBadFields) {
  loss::LossConfig c;
  c.tversky_alpha = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.alpha_t = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(loss::LossConfig{}.validate());
}

TEST(SimpleLosses, L1AndLsgan) {
  const Tensor a({2}, std::vector<double>{1.0, -2.0});
  const Tensor b({2}, std::vector<double>{0.5, 1.0});
  EXPECT_DOUBLE_EQ(loss::l1_loss(constant(a), constant(b)).value().item(), 1.75);
  EXPECT_DOUBLE_EQ(loss::lsgan_loss(constant(a), 1.0).value().item(), (0.0 + 9.0) / 2.0);
  EXPECT_THROW(loss::l1_loss(constant(a), constant(Tensor({3}))), ShapeError);
}

TEST(Perceptual, ZeroForIdenticalInputs) {
  const auto ex = make_fallback_extractor();
  const Var x = constant(random_tensor({1, 1, 16, 16}, 7));
  EXPECT_DOUBLE_EQ(loss::perceptual_loss(x, x, *ex).value().item(), 0.0);
  EXPECT_GT(loss::perceptual_loss(x, constant(random_tensor({1, 1, 16, 16}, 8)), *ex).value().item(), 0.0);
}

TEST(LossReport, PreservesOrder) {
  loss::LossReport r;
  r.set("b", 1.0);
  r.set("a", 2.0);
  r.set("b", 3.0);
  ASSERT_EQ(r.entries().size(), 2u);
  EXPECT_EQ(r.entries()[0].first, "b");
  EXPECT_EQ(r.get("b"), 3.0);
  r.set("c", std::nan(""));
  EXPECT_FALSE(r.all_finite());
}

TEST(LossesGrad, EveryLoss) {
  const Tensor y = random_mask({1, 1, 6, 6}, 9);
  Var p(random_tensor({1, 1, 6, 6}, 10, 0.05, 0.95), true);
  Var a(random_tensor({1, 1, 6, 6}, 11), true);
  Var b(random_tensor({1, 1, 6, 6}, 12), true);
  const std::vector<NamedParam> pv{{"p", &p}};
  const std::vector<NamedParam> ab{{"a", &a}, {"b", &b}};
  constexpr double tol = 1e-6;
  EXPECT_LT(gradcheck([&] { return loss::focal_ce(p, y, 0.25, 2.0); }, pv).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::focal_ce(p, y, 1.0, 0.0); }, pv).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::tversky_loss(p, y, 0.4, 0.6, 1.0); }, pv).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::tversky_loss(p, y, 0.3, 0.7, 1.0, 0.75); }, pv).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::segmentation_loss(p, y, {}); }, pv).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::l1_loss(a, b); }, ab).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::lsgan_loss(a, 1.0); }, ab).relative_error, tol);
  EXPECT_LT(gradcheck([&] { return loss::lsgan_loss(a, 0.0); }, ab).relative_error, tol);
  const auto ex = make_fallback_extractor();
  Var c(random_tensor({1, 1, 8, 8}, 13), true);
  Var d(random_tensor({1, 1, 8, 8}, 14), true);
  EXPECT_LT(gradcheck([&] { return loss::perceptual_loss(c, d, *ex); }, {{"c", &c}, {"d", &d}}).relative_error,
            1e-4);
  loss::LossConfig cfg;
  cfg.weight_cycle_perceptual = 0.5;
  const Tensor img = random_tensor({1, 1, 8, 8}, 15);
  const Tensor m8 = random_mask({1, 1, 8, 8}, 16);
  Var rm(random_tensor({1, 1, 8, 8}, 17, 0.05, 0.95), true);
  auto r = gradcheck(
      [&] {
        const auto cl = loss::cycle_losses(m8, rm, img, c, cfg, ex.get());
        return ops::add(cl.mask_cycle, cl.image_cycle);
      },
      {{"rm", &rm}, {"c", &c}});
  EXPECT_LT(r.relative_error, 1e-4) << r.worst;
}
