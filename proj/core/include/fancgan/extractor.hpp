#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fancgan/autograd.hpp"
#include "fancgan/networks.hpp"

namespace fancgan {

// Maps an image batch to a list of per-layer feature tensors. Shared by the
// perceptual loss and by FID feature extraction.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual std::string name() const = 0;
  virtual int input_channels() const = 0;
  // Square side images are resampled to before FID extraction; 0 = native.
  virtual int input_size() const = 0;
  virtual std::vector<Var> features(const Var& images) const = 0;
  // Layers compared by the perceptual loss.
  virtual std::vector<int> perceptual_layers() const = 0;
  // Layer whose spatially pooled activations form the FID feature vector.
  virtual int pooled_layer() const = 0;
};

// Frozen stack of convolutions. Each layer is conv -> optional leaky ->
// optional 2x2 average pool; every layer output is a feature.
class ConvStackExtractor : public FeatureExtractor {
 public:
  struct Layer {
    nn::Conv2d conv;
    bool activation = true;
    bool pool = false;
  };

  ConvStackExtractor(std::string name, std::vector<Layer> layers, std::vector<int> perceptual,
                     int pooled, int input_size);

  std::string name() const override { return name_; }
  int input_channels() const override;
  int input_size() const override { return input_size_; }
  std::vector<Var> features(const Var& images) const override;
  std::vector<int> perceptual_layers() const override { return perceptual_; }
  int pooled_layer() const override { return pooled_; }

 private:
  std::string name_;
  std::vector<Layer> layers_;
  std::vector<int> perceptual_;
  int pooled_;
  int input_size_;
};

inline constexpr const char* kFallbackExtractorName = "random-conv-v1";

// Deterministic fixed-seed three-channel extractor that needs no download.
std::unique_ptr<FeatureExtractor> make_fallback_extractor();

// Resolves an extractor by name. Pretrained networks are not bundled; asking
// for one raises ExtractorUnavailable pointing at the fallback.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name);

// Replicates single-channel input to the extractor's channel count.
Var match_channels(const Var& images, const FeatureExtractor& extractor);

}  // namespace fancgan
