#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "fancgan/data.hpp"
#include "fancgan/networks.hpp"
#include "fancgan/raster.hpp"

namespace fancgan::gen {

// Decorrelated per-item seed (splitmix64 of base + index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Draws z and the noise seed from `seed`. When `expected` is given the mask
// must have exactly that size.
Raster generate(const Raster& mask, const nn::StyleUNet& generator, std::uint64_t seed,
                std::optional<data::ImageSize> expected = std::nullopt);
Raster generate_with_latent(const Raster& mask, const nn::StyleUNet& generator, const Tensor& z,
                            std::uint64_t noise_seed);

Raster segment_probabilities(const Raster& image, const nn::AttentionUNet& segmenter,
                             std::optional<data::ImageSize> expected = std::nullopt);
// p >= threshold -> 1.
Raster segment(const Raster& image, const nn::AttentionUNet& segmenter, double threshold = 0.5,
               std::optional<data::ImageSize> expected = std::nullopt);

struct MaskSynthesisSpec {
  data::ImageSize canvas{256, 256};
  std::pair<int, int> particle_count_range{20, 40};
  std::pair<double, double> radius_range{6.0, 12.0};
  std::pair<double, double> ellipticity_range{0.0, 0.3};
  bool overlap_allowed = false;
  std::uint64_t seed = 0;
  // Placement tries per particle before giving up.
  int max_attempts = 500;

  // Throws ConfigError.
  void validate() const;
};

// One particle. The semi-axes are r/sqrt(1-e) and r*sqrt(1-e), so the area
// stays pi r^2 whatever the ellipticity.
struct Ellipse {
  double cy, cx;
  double a, b;
  double angle;
  // Squared normalized radius of a point; <= 1 inside.
  double radial2(double y, double x) const;
};

struct SynthesizedMask {
  Raster mask;
  std::vector<Ellipse> particles;
};

// Mask i depends only on (spec, i). Without overlap every particle is kept at
// least one pixel away (8-neighbourhood) from the others; a particle that
// cannot be placed raises DensityError carrying the number placed so far.
SynthesizedMask synthesize_mask(const MaskSynthesisSpec& spec, std::size_t index);
std::vector<Raster> synthesize_masks(const MaskSynthesisSpec& spec, int count);

struct PostProcessSpec {
  double brightness_shift = 0.0;
  double exposure_gain = 1.0;
  // Values above 1/3 would make the tone curves non-monotone.
  double shadow_lift = 0.0;
  double highlight_cut = 0.0;

  void validate() const;
  bool is_identity() const;
};

// On u = (v + 1) / 2: gain, shift, shadow lift below 0.5, highlight cut above
// 0.5, each clamped to [0, 1]. The identity spec returns the input untouched.
Raster post_process(const Raster& image, const PostProcessSpec& spec);
double post_process_unit(double u, const PostProcessSpec& spec);

// Procedural stand-in for microscopy data: ellipse masks and dome-shaded
// bright particles on a dark, slightly graded, noisy background.
MaskSynthesisSpec toy_mask_spec(int size, std::uint64_t seed);
std::vector<data::SamplePair> make_toy_dataset(int count, int size, std::uint64_t seed);
// images/<id>.png and masks/<id>.png
void write_dataset(const std::filesystem::path& root, const std::vector<data::SamplePair>& pairs);

}  // namespace fancgan::gen
