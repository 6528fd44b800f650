#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fancgan/error.hpp"
#include "fancgan/generation.hpp"
#include "fancgan/ops.hpp"
#include "fancgan/training.hpp"
#include "fixtures.hpp"

using namespace fancgan;
using fancgan::testing::small_model;
using fancgan::testing::TempDir;

namespace {

train::TrainingConfig quick_config(int epochs) {
  train::TrainingConfig c;
  c.epochs = epochs;
  c.learning_rate = 2e-4;
  c.checkpoint_every = 1;
  c.augmentation.clahe_enabled = false;
  return c;
}

data::DatasetSplit toy_split(int size = 32) {
  return data::split_dataset(gen::make_toy_dataset(10, size, 1), 2);
}

std::vector<data::SamplePair> batch_of(const data::DatasetSplit& s) {
  return {s.train[0], s.train[1]};
}

// Every parameter and optimizer moment of two states matches bit for bit.
void expect_same_state(train::TrainState& a, train::TrainState& b) {
  auto cmp = [](std::vector<NamedParam> x, std::vector<NamedParam> y) {
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].var->value(), y[i].var->value()) << x[i].name;
  };
  cmp(a.generator.parameters(), b.generator.parameters());
  cmp(a.segmenter.parameters(), b.segmenter.parameters());
  cmp(a.disc_image.parameters(), b.disc_image.parameters());
  cmp(a.disc_mask.parameters(), b.disc_mask.parameters());
  EXPECT_EQ(a.opt_generator, b.opt_generator);
  EXPECT_EQ(a.opt_segmenter, b.opt_segmenter);
  EXPECT_EQ(a.opt_disc_image, b.opt_disc_image);
  EXPECT_EQ(a.opt_disc_mask, b.opt_disc_mask);
  EXPECT_EQ(a.step, b.step);
  EXPECT_EQ(a.epoch, b.epoch);
  EXPECT_TRUE(a.rng == b.rng);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(Adam, MatchesHandComputedUpdate) {
  Var w(Tensor({2}, std::vector<double>{1.0, -1.0}), true);
  std::vector<NamedParam> params{{"w", &w}};
  auto st = train::make_adam_state(params);
  const train::AdamConfig cfg{0.5, 0.999, 1e-8};
  ops::sum(ops::mul(w, constant(Tensor({2}, std::vector<double>{3.0, 0.5})))).backward();
  train::adam_step(params, st, 0.1, cfg);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  const double w1 = 1.0 - 0.1 * 3.0 / (3.0 + 1e-8);
  EXPECT_NEAR(w.value()[0], w1, 1e-15);
  EXPECT_NEAR(w.value()[1], -1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  w.zero_grad();
  ops::sum(ops::mul(w, constant(Tensor({2}, std::vector<double>{1.0, 1.0})))).backward();
  train::adam_step(params, st, 0.1, cfg);
  const double m = 0.5 * (0.5 * 3.0) + 0.5 * 1.0, v = 0.999 * (0.001 * 9.0) + 0.001 * 1.0;
  const double expect = w1 - 0.1 * (m / 0.75) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(w.value()[0], expect, 1e-12);
  EXPECT_EQ(st.t, 2);
}

TEST(Adam, SkipsParamsWithoutGradient) {
  Var w(Tensor({1}, 2.0), true);
  std::vector<NamedParam> params{{"w", &w}};
  auto st = train::make_adam_state(params);
  train::adam_step(params, st, 0.1, {});
  EXPECT_EQ(w.value()[0], 2.0);
}

TEST(Config, Validation) {
  auto c = quick_config(1);
  EXPECT_NO_THROW(c.validate());
  c.device = "cuda";
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config(-1);
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config(1);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  auto m = small_model(30);
  EXPECT_THROW(m.validate(), ConfigError);
  m = small_model(8);
  EXPECT_THROW(m.validate(), ConfigError);  // discriminator does not fit
  EXPECT_NO_THROW(small_model(32).validate());
}

TEST(Config, DescribeRoundTrip) {
  auto m = small_model(32);
  m.image_size = {32, 64};
  m.generator.adain_eps = 3e-6;
  m.discriminator.kernel = 3;
  std::map<std::string, std::string> fields;
  for (const auto& [k, v] : train::describe(m)) fields[k] = v;
  EXPECT_EQ(fields.at("image_size"), "32x64");
  EXPECT_EQ(train::model_config_from(fields), m);
}

TEST(InitState, SeedDeterminesParameters) {
  auto a = train::init_state(small_model(), 7);
  auto b = train::init_state(small_model(), 7);
  auto c = train::init_state(small_model(), 8);
  expect_same_state(a, b);
  EXPECT_NE(a.generator.head.weight.value(), c.generator.head.weight.value());
}

TEST(DiscriminatorObjective, DoesNotReachGenerator) {
  auto st = train::init_state(small_model(), 1);
  const auto split = toy_split();
  const Tensor mask = stack_rasters({&split.train[0].mask});
  const Tensor image = stack_rasters({&split.train[0].image});
  std::mt19937_64 rng(3);
  const Var fake = st.generator.forward(constant(mask), Tensor::randn({1, 8}, rng), 1);
  train::discriminator_objective(st.disc_image, image, fake).backward();
  for (const auto& p : st.generator.parameters()) EXPECT_FALSE(p.var->has_grad()) << p.name;
  bool any = false;
  for (const auto& p : st.disc_image.parameters()) any |= p.var->has_grad();
  EXPECT_TRUE(any);
}

TEST(TrainStep, ReportOrderFiniteAndDeterministic) {
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  auto a = train::init_state(small_model(), 1);
  auto b = a.clone();
  const auto ra = train::train_step(batch_of(split), a, {}, quick_config(1), *ex);
  const auto rb = train::train_step(batch_of(split), b, {}, quick_config(1), *ex);
  const std::vector<std::string> names{"generator_total", "segmentation_total", "disc_image", "disc_mask",
                                       "adv_image",       "adv_mask",           "l1",         "perceptual",
                                       "segmentation",    "mask_cycle",         "image_cycle"};
  ASSERT_EQ(ra.entries().size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(ra.entries()[i].first, names[i]);
  EXPECT_TRUE(ra.all_finite());
  EXPECT_EQ(ra, rb);
  expect_same_state(a, b);
  EXPECT_EQ(a.step, 1);
  // Gradients are cleared after the update.
  for (const auto& p : a.generator.parameters()) EXPECT_FALSE(p.var->has_grad());
}

TEST(TrainStep, UpdatesEveryNetwork) {
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  auto before = train::init_state(small_model(), 1);
  auto after = before.clone();
  train::train_step(batch_of(split), after, {}, quick_config(1), *ex);
  EXPECT_NE(before.generator.head.weight.value(), after.generator.head.weight.value());
  EXPECT_NE(before.segmenter.head.weight.value(), after.segmenter.head.weight.value());
  EXPECT_NE(before.disc_image.head.weight.value(), after.disc_image.head.weight.value());
  EXPECT_NE(before.disc_mask.head.weight.value(), after.disc_mask.head.weight.value());
}

TEST(TrainStep, NonFiniteLossLeavesStateUntouched) {
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  auto st = train::init_state(small_model(), 1);
  // Only the mask discriminator is poisoned, so segmentation_total is the
  // first term to go non-finite.
  st.disc_mask.head.bias.mutable_value()[0] = std::nan("");
  const auto disc_before = st.disc_image.head.weight.value();
  const auto gen_before = st.generator.head.weight.value();
  const auto rng_before = st.rng;
  try {
    train::train_step(batch_of(split), st, {}, quick_config(1), *ex);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("segmentation_total"), std::string::npos) << e.what();
  }
  EXPECT_EQ(st.step, 0);
  EXPECT_EQ(st.opt_generator.t, 0);
  EXPECT_EQ(st.disc_image.head.weight.value(), disc_before);
  EXPECT_EQ(st.generator.head.weight.value(), gen_before);
  EXPECT_TRUE(st.rng == rng_before);
}

TEST(Train, WritesCheckpointsAndLogs) {
  TempDir dir("train");
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  int calls = 0;
  train::TrainOptions opt{dir.path(), [&](const train::TrainState&, const train::ValidationRow& row) {
                            ++calls;
                            EXPECT_TRUE(std::isfinite(row.ssim));
                          }};
  const auto st = train::train(split, train::init_state(small_model(), 1), {}, quick_config(3), *ex, opt);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(st.epoch, 3);
  // 7 training pairs at batch 2: 4 steps per epoch.
  EXPECT_EQ(st.step, 12);
  for (int e = 1; e <= 3; ++e) EXPECT_TRUE(std::filesystem::exists(dir / train::checkpoint_name(e).string()));
  EXPECT_TRUE(std::filesystem::exists(dir / "final.fcg"));
  std::ifstream val(dir / "val_report.tsv");
  std::string line;
  std::getline(val, line);
  EXPECT_EQ(line, "epoch\tsegmentation_loss\tssim");
  int rows = 0;
  while (std::getline(val, line)) ++rows;
  EXPECT_EQ(rows, 3);
  std::ifstream metrics(dir / "metrics.tsv");
  int mrows = 0;
  while (std::getline(metrics, line)) ++mrows;
  EXPECT_EQ(mrows, 12 * 11);
}

TEST(Train, ZeroEpochsWritesNothing) {
  TempDir dir("zero");
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  const auto st = train::train(split, train::init_state(small_model(), 1), {}, quick_config(0), *ex,
                               {dir.path(), {}});
  EXPECT_EQ(st.step, 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "final.fcg"));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  TempDir full_dir("full"), part_dir("part");
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  auto full = train::train(split, train::init_state(small_model(), 5), {}, quick_config(2), *ex,
                           {full_dir.path(), {}});
  train::train(split, train::init_state(small_model(), 5), {}, quick_config(1), *ex, {part_dir.path(), {}});
  auto resumed_start = train::load_checkpoint(part_dir / "final.fcg");
  auto resumed = train::train(split, std::move(resumed_start), {}, quick_config(2), *ex, {part_dir.path(), {}});
  expect_same_state(full, resumed);
  EXPECT_EQ(slurp(full_dir / "metrics.tsv"), slurp(part_dir / "metrics.tsv"));
  EXPECT_EQ(slurp(full_dir / "final.fcg"), slurp(part_dir / "final.fcg"));
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir("ckpt");
  const auto split = toy_split();
  const auto ex = make_fallback_extractor();
  auto st = train::init_state(small_model(), 2);
  train::train_step(batch_of(split), st, {}, quick_config(1), *ex);
  st.epoch = 4;
  train::save_checkpoint(st, dir / "c.fcg");
  const auto model = small_model();
  auto back = train::load_checkpoint(dir / "c.fcg", &model);
  expect_same_state(st, back);
  EXPECT_EQ(back.model, model);
}

TEST(Checkpoint, MismatchAndCorruption) {
  TempDir dir("bad");
  const auto st = train::init_state(small_model(32), 2);
  train::save_checkpoint(st, dir / "c.fcg");
  const auto other = small_model(64);
  try {
    train::load_checkpoint(dir / "c.fcg", &other);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("image_size"), std::string::npos) << e.what();
  }
  auto wider = small_model(32);
  wider.generator.base_width = 6;
  EXPECT_THROW(train::load_checkpoint(dir / "c.fcg", &wider), SchemaError);
  std::filesystem::resize_file(dir / "c.fcg", std::filesystem::file_size(dir / "c.fcg") / 2);
  EXPECT_THROW(train::load_checkpoint(dir / "c.fcg"), SchemaError);
  EXPECT_THROW(train::load_checkpoint(dir / "missing.fcg"), Error);
}

TEST(ValidateEpoch, ReportsFiniteMetrics) {
  const auto split = toy_split();
  const auto st = train::init_state(small_model(), 1);
  const auto row = train::validate_epoch(split.val, st, {}, 0);
  EXPECT_TRUE(std::isfinite(row.segmentation_loss));
  EXPECT_GE(row.ssim, -1.0);
  EXPECT_LE(row.ssim, 1.0);
  const auto again = train::validate_epoch(split.val, st, {}, 0);
  EXPECT_EQ(row.ssim, again.ssim);
}
