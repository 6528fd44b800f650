#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fancgan/error.hpp"
#include "fancgan/evaluation.hpp"
#include "fancgan/generation.hpp"
#include "fixtures.hpp"
#include "ssim_oracle.hpp"

using namespace fancgan;
using fancgan::testing::ssim_direct;
using fancgan::testing::TempDir;

namespace {

eval::FeatureStats stats(std::vector<double> mean, std::vector<double> cov) {
  eval::FeatureStats s;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.sample_count = 100;
  return s;
}

Raster random_raster(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Raster r(h, w);
  for (double& v : r.pixels()) v = u(rng);
  return r;
}

}  // namespace

TEST(Fid, OneDimensionalMeanShift) {
  EXPECT_NEAR(eval::fid(stats({0.0}, {1.0}), stats({2.0}, {1.0})), 4.0, 1e-6);
}

TEST(Fid, TwoDimensionalVariance) {
  EXPECT_NEAR(eval::fid(stats({0, 0}, {1, 0, 0, 1}), stats({0, 0}, {4, 0, 0, 4})), 2.0, 1e-6);
}

TEST(Fid, NonCommutingCovariances) {
  // Closed form for 2x2: tr sqrt(A B) = sqrt(tr(AB) + 2 sqrt(det(AB))).
  const std::vector<double> a{2.0, 0.5, 0.5, 1.0}, b{1.0, -0.3, -0.3, 3.0};
  const double ab00 = a[0] * b[0] + a[1] * b[2], ab11 = a[2] * b[1] + a[3] * b[3];
  const double det = (a[0] * a[3] - a[1] * a[2]) * (b[0] * b[3] - b[1] * b[2]);
  const double tr_sqrt = std::sqrt(ab00 + ab11 + 2 * std::sqrt(det));
  const double expect = 1.0 + 4.0 + (a[0] + a[3]) + (b[0] + b[3]) - 2 * tr_sqrt;
  EXPECT_NEAR(eval::fid(stats({1, 0}, a), stats({0, 2}, b)), expect, 1e-9);
}

TEST(Fid, SelfDistanceIsZeroAndSymmetric) {
  std::mt19937_64 rng(1);
  const Tensor f1 = Tensor::randn({40, 5}, rng), f2 = Tensor::randn({40, 5}, rng);
  const auto s1 = eval::gaussian_stats(f1), s2 = eval::gaussian_stats(f2);
  EXPECT_NEAR(eval::fid(s1, s1), 0.0, 1e-6);
  EXPECT_NEAR(eval::fid(s1, s2), eval::fid(s2, s1), 1e-6);
  EXPECT_GT(eval::fid(s1, s2), 0.0);
}

TEST(Fid, DimensionMismatchThrows) {
  EXPECT_THROW(eval::fid(stats({0}, {1}), stats({0, 0}, {1, 0, 0, 1})), ShapeError);
}

TEST(GaussianStats, UnbiasedCovariance) {
  const Tensor f({3, 2}, std::vector<double>{1, 2, 3, 6, 5, 4});
  const auto s = eval::gaussian_stats(f);
  EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(s.mean[1], 4.0);
  EXPECT_DOUBLE_EQ(s.covariance[0], 4.0);  // (4 + 0 + 4) / 2
  EXPECT_DOUBLE_EQ(s.covariance[3], 4.0);
  EXPECT_DOUBLE_EQ(s.covariance[1], 2.0);  // (-2*-2 + 0 + 2*0) / 2
  EXPECT_EQ(s.covariance[1], s.covariance[2]);
  EXPECT_THROW(eval::gaussian_stats(Tensor({1, 2})), ValidationError);
}

TEST(Ssim, SelfSimilarityIsOne) {
  std::mt19937_64 rng(2);
  const Raster a = random_raster(24, 20, rng);
  EXPECT_NEAR(eval::ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, AgreesWithDirectFormula) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Raster a = random_raster(16 + i % 3, 18, rng);
    Raster b = a;
    std::normal_distribution<double> n(0.0, 0.1 + 0.05 * i);
    for (double& v : b.pixels()) v = std::clamp(v + n(rng), -1.0, 1.0);
    EXPECT_NEAR(eval::ssim(a, b), ssim_direct(a, b), 1e-6);
  }
}

TEST(Ssim, SymmetricBoundedAndShapeChecked) {
  std::mt19937_64 rng(4);
  const Raster a = random_raster(16, 16, rng), b = random_raster(16, 16, rng);
  EXPECT_NEAR(eval::ssim(a, b), eval::ssim(b, a), 1e-12);
  EXPECT_LT(eval::ssim(a, b), 1.0);
  EXPECT_GE(eval::ssim(a, b), -1.0);
  EXPECT_EQ(eval::ssim_map(a, b).height(), 6);
  EXPECT_THROW(eval::ssim(a, Raster(16, 15)), ShapeError);
  // Small images shrink the window.
  EXPECT_NEAR(eval::ssim(Raster(4, 6, 0.3), Raster(4, 6, 0.3)), 1.0, 1e-12);
}

TEST(Ssim, WorseWithMoreNoise) {
  std::mt19937_64 rng(5);
  const Raster a = gen::make_toy_dataset(1, 32, 1)[0].image;
  double prev = 1.0;
  for (double sd : {0.05, 0.2, 0.5}) {
    Raster b = a;
    std::normal_distribution<double> n(0.0, sd);
    for (double& v : b.pixels()) v += n(rng);
    const double s = eval::ssim(a, b);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Features, ShapeAndDeterminism) {
  const auto ex = make_fallback_extractor();
  std::vector<Raster> imgs;
  for (const auto& p : gen::make_toy_dataset(3, 32, 2)) imgs.push_back(p.image);
  const Tensor f = eval::extract_features(imgs, *ex);
  EXPECT_EQ(f.dim(0), 3);
  EXPECT_GT(f.dim(1), 1);
  EXPECT_EQ(f, eval::extract_features(imgs, *ex));
  EXPECT_THROW(make_extractor("inception-v3"), ExtractorUnavailable);
  EXPECT_EQ(make_extractor(kFallbackExtractorName)->name(), kFallbackExtractorName);
}

TEST(EvaluateImages, IdentitySourceIsPerfect) {
  const auto ex = make_fallback_extractor();
  const auto test = gen::make_toy_dataset(5, 32, 3);
  const auto r = eval::evaluate_images(test, [](const data::SamplePair& p, std::size_t) { return p.image; }, *ex,
                                       "identity");
  EXPECT_NEAR(r.fid, 0.0, 1e-6);
  EXPECT_NEAR(r.ssim_mean, 1.0, 1e-12);
  EXPECT_EQ(r.per_sample_ssim.size(), 5u);
  EXPECT_EQ(r.extractor, kFallbackExtractorName);
}

TEST(Reports, TableAndTsvLayout) {
  eval::MetricsReport a{"Focal CE + TV(α=0.4, β=0.6)", 12.3456789, 0.5, {{"s0", 0.5}}, kFallbackExtractorName};
  eval::MetricsReport b{"CE", 1.0, 0.25, {}, kFallbackExtractorName};
  std::ostringstream os;
  eval::write_report_table(os, {a, b}, "Ablation Study");
  const std::string t = os.str();
  EXPECT_NE(t.find("Ablation Study"), std::string::npos);
  EXPECT_NE(t.find("Loss Configuration"), std::string::npos);
  EXPECT_NE(t.find("12.3457"), std::string::npos);
  EXPECT_NE(t.find("unbiased (N-1)"), std::string::npos);
  // Every table line has the same display width despite the Greek letters.
  std::istringstream lines(t);
  std::string line;
  std::size_t width = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || (line[0] != '|' && line[0] != '+')) continue;
    std::size_t cps = 0;
    for (unsigned char ch : line) cps += (ch & 0xC0) != 0x80;
    if (width == 0) width = cps;
    EXPECT_EQ(cps, width) << line;
  }
  TempDir dir("rep");
  eval::write_report_tsv(dir / "r.tsv", {a, b});
  std::ifstream in(dir / "r.tsv");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].rfind("# extractor\t", 0), 0u);
  EXPECT_EQ(rows[2], "configuration\tfid\tssim_mean\tn");
}
