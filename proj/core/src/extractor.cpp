#include "fancgan/extractor.hpp"

#include <random>

#include "fancgan/error.hpp"
#include "fancgan/ops.hpp"

namespace fancgan {

ConvStackExtractor::ConvStackExtractor(std::string name, std::vector<Layer> layers,
                                       std::vector<int> perceptual, int pooled, int input_size)
    : name_(std::move(name)),
      layers_(std::move(layers)),
      perceptual_(std::move(perceptual)),
      pooled_(pooled),
      input_size_(input_size) {
  if (layers_.empty()) throw ConfigError("extractor needs at least one layer");
  const int n = static_cast<int>(layers_.size());
  for (int l : perceptual_) {
    if (l < 0 || l >= n) throw ConfigError("extractor perceptual layer out of range");
  }
  if (pooled_ < 0 || pooled_ >= n) throw ConfigError("extractor pooled layer out of range");
  for (auto& layer : layers_) {
    // Frozen.
    layer.conv.weight = Var(layer.conv.weight.value(), false);
    if (layer.conv.bias.defined()) layer.conv.bias = Var(layer.conv.bias.value(), false);
  }
}

int ConvStackExtractor::input_channels() const { return layers_.front().conv.in_channels(); }

std::vector<Var> ConvStackExtractor::features(const Var& images) const {
  if (images.value().rank() != 4 || images.dim(1) != input_channels()) {
    throw ShapeError("extractor '" + name_ + "' expects " + std::to_string(input_channels()) +
                     " channels, got " + shape_str(images.shape()));
  }
  std::vector<Var> out;
  Var x = images;
  for (const auto& layer : layers_) {
    x = layer.conv(x);
    if (layer.activation) x = ops::leaky_relu(x, 0.2);
    out.push_back(x);
    if (layer.pool) x = ops::avgpool2x2(x);
  }
  return out;
}

std::unique_ptr<FeatureExtractor> make_fallback_extractor() {
  std::mt19937_64 rng(0x46414e4347414eULL);
  std::vector<ConvStackExtractor::Layer> layers;
  layers.push_back({nn::make_conv(3, 16, 3, 1, 1, rng), true, true});
  layers.push_back({nn::make_conv(16, 32, 3, 1, 1, rng), true, true});
  layers.push_back({nn::make_conv(32, 64, 3, 1, 1, rng), true, false});
  return std::make_unique<ConvStackExtractor>(kFallbackExtractorName, std::move(layers),
                                              std::vector<int>{1, 2}, 2, 64);
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name) {
  if (name == kFallbackExtractorName || name == "fallback") return make_fallback_extractor();
  if (name == "vgg16" || name == "vgg19" || name == "inception-v3" || name == "inception") {
    throw ExtractorUnavailable("pretrained extractor '" + name +
                               "' is not bundled with this build; use the deterministic "
                               "fallback extractor '" + std::string(kFallbackExtractorName) + "'");
  }
  throw ExtractorUnavailable("unknown feature extractor '" + name + "'; available: " +
                             std::string(kFallbackExtractorName));
}

Var match_channels(const Var& images, const FeatureExtractor& extractor) {
  const int want = extractor.input_channels();
  if (images.dim(1) == want) return images;
  if (images.dim(1) != 1) {
    throw ShapeError("cannot adapt " + std::to_string(images.dim(1)) + " channels to extractor '" +
                     extractor.name() + "'");
  }
  return ops::repeat_channels(images, want);
}

}  // namespace fancgan
