#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fancgan/raster.hpp"

namespace fancgan::data {

struct ImageSize {
  int height = 256;
  int width = 256;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

// Registered grayscale image (values in [-1, 1]) and binary mask ({0, 1}).
struct SamplePair {
  std::string id;
  Raster image;
  Raster mask;
};

// Throws ValidationError naming the violated invariant.
void validate(const SamplePair& pair);

struct DatasetSplit {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
  std::vector<SamplePair> test;
  std::uint64_t seed = 0;
};

struct TileGrid {
  int rows = 8;
  int cols = 8;
};

struct AugmentationPolicy {
  double horizontal_flip_prob = 0.5;
  double vertical_flip_prob = 0.5;
  bool clahe_enabled = true;
  double clahe_clip_limit = 2.0;
  TileGrid clahe_tile_grid{};
  // Crop window, resampled back to the source size so shapes are preserved.
  std::optional<std::pair<int, int>> random_crop_size;

  // Throws ConfigError for out-of-range fields.
  void validate() const;
  void validate_for(int height, int width) const;
};

// Expects <root>/images and <root>/masks with entries matched by file stem.
std::vector<SamplePair> load_dataset(const std::filesystem::path& root, ImageSize size);

// Image in [0, 1] of full scale -> [-1, 1].
Raster normalize_image(const Raster& unit);
// Threshold at half of full scale.
Raster binarize(const Raster& unit, double threshold = 0.5);

// Seeded shuffle, then 70/20/10 into train/test/val. Each part gets at least
// one pair; rounding remainders go to train.
DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed);

struct SplitSizes {
  std::size_t train, test, val;
};
SplitSizes split_sizes(std::size_t n);

// Plain-text `id<TAB>split` lines.
void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split);
std::map<std::string, std::string> read_split_manifest(const std::filesystem::path& path);

SamplePair augment(const SamplePair& pair, const AugmentationPolicy& policy, std::mt19937_64& rng);

// Contrast-limited adaptive histogram equalization over 256 levels. `image`
// is in [-1, 1]; the result stays in [-1, 1]. clip_limit is a multiple of
// the mean bin height of a tile histogram.
Raster clahe(const Raster& image, double clip_limit, TileGrid tiles);

}  // namespace fancgan::data
