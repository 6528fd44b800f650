#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fancgan/data.hpp"
#include "fancgan/extractor.hpp"
#include "fancgan/losses.hpp"
#include "fancgan/networks.hpp"

namespace fancgan::train {

inline constexpr std::uint32_t kCheckpointSchemaVersion = 1;

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainingConfig {
  int epochs = 700;
  double learning_rate = 1e-4;
  int batch_size = 2;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  int checkpoint_every = 50;
  std::string device = "cpu";
  bool augment = true;
  data::AugmentationPolicy augmentation{};

  // Throws ConfigError naming the field ("training.X").
  void validate() const;
};

struct ModelConfig {
  data::ImageSize image_size{};
  nn::StyleUNetConfig generator{};
  nn::AttentionUNetConfig segmenter{};
  nn::PatchDiscriminatorConfig discriminator{};

  // Checks divisibility and discriminator fit against image_size.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Flat `name -> value` view used by checkpoints and manifests.
std::vector<std::pair<std::string, std::string>> describe(const ModelConfig& config);
ModelConfig model_config_from(const std::map<std::string, std::string>& fields);

// First and second moments for one parameter list, in parameters() order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long t = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState make_adam_state(const std::vector<NamedParam>& params);
// One bias-corrected update from the accumulated gradients.
void adam_step(const std::vector<NamedParam>& params, AdamState& state, double lr, const AdamConfig& config);

struct TrainState {
  ModelConfig model;
  nn::StyleUNet generator;
  nn::AttentionUNet segmenter;
  nn::PatchDiscriminator disc_image;
  nn::PatchDiscriminator disc_mask;
  AdamState opt_generator;
  AdamState opt_segmenter;
  AdamState opt_disc_image;
  AdamState opt_disc_mask;
  int epoch = 0;
  long long step = 0;
  std::mt19937_64 rng;

  TrainState clone() const;
};

// Parameters drawn from a generator seeded with `seed`.
TrainState init_state(const ModelConfig& model, std::uint64_t seed);

// LSGAN objective of one discriminator: real towards 1, the detached fake
// towards 0.
Var discriminator_objective(const nn::PatchDiscriminator& disc, const Tensor& real, const Var& fake);

// Forward path: fake = G(mask, z1), rec_mask = F(fake).
// Backward path: pred = F(image), rec_image = G(pred, z2) with pred left soft.
// Updates G and F jointly, then D_image, then D_mask. The state is left
// untouched when a term is not finite (NumericalError naming the term).
loss::LossReport train_step(const std::vector<data::SamplePair>& batch, TrainState& state,
                            const loss::LossConfig& losses, const TrainingConfig& config,
                            const FeatureExtractor& extractor);

struct ValidationRow {
  int epoch;
  double segmentation_loss;
  double ssim;
};

// Segmentation loss of F on the val images and SSIM of G(mask) against the
// paired image, generated with per-sample seeds derived from `seed`.
ValidationRow validate_epoch(const std::vector<data::SamplePair>& val, const TrainState& state,
                             const loss::LossConfig& losses, std::uint64_t seed);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  std::function<void(const TrainState&, const ValidationRow&)> on_epoch;
};

// Runs epochs state.epoch+1 .. config.epochs. Writes metrics.tsv
// (step, name, value), val_report.tsv, ckpt_epochNNNN.fcg every
// checkpoint_every epochs and final.fcg when at least one epoch ran.
TrainState train(const data::DatasetSplit& split, TrainState state, const loss::LossConfig& losses,
                 const TrainingConfig& config, const FeatureExtractor& extractor,
                 const TrainOptions& options = {});

std::filesystem::path checkpoint_name(int epoch);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// With `expected`, any model field that differs raises SchemaError naming it.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace fancgan::train
