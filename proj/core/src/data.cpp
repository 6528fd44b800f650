#include "fancgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fancgan/error.hpp"
#include "fancgan/image_io.hpp"

namespace fancgan::data {
namespace fs = std::filesystem;

void validate(const SamplePair& pair) {
  if (pair.image.height() != pair.mask.height() || pair.image.width() != pair.mask.width()) {
    throw ValidationError("sample '" + pair.id + "': image and mask sizes differ");
  }
  for (double v : pair.mask.pixels()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("sample '" + pair.id + "': mask is not binary");
  }
  for (double v : pair.image.pixels()) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw ValidationError("sample '" + pair.id + "': image value outside [-1, 1]");
    }
  }
}

void AugmentationPolicy::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(horizontal_flip_prob, "horizontal_flip_prob");
  prob(vertical_flip_prob, "vertical_flip_prob");
  if (!(clahe_clip_limit > 0.0)) throw ConfigError("clahe_clip_limit must be positive");
  if (clahe_tile_grid.rows < 1 || clahe_tile_grid.cols < 1) {
    throw ConfigError("clahe_tile_grid must be a positive integer pair");
  }
  if (random_crop_size && (random_crop_size->first < 1 || random_crop_size->second < 1)) {
    throw ConfigError("random_crop_size must be a positive integer pair");
  }
}

void AugmentationPolicy::validate_for(int height, int width) const {
  validate();
  if (random_crop_size && (random_crop_size->first > height || random_crop_size->second > width)) {
    throw ConfigError("random_crop_size exceeds the source dimensions");
  }
}

Raster normalize_image(const Raster& unit) {
  Raster out(unit.height(), unit.width());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    out.pixels()[i] = std::clamp(unit.pixels()[i] * 2.0 - 1.0, -1.0, 1.0);
  }
  return out;
}

Raster binarize(const Raster& unit, double threshold) {
  Raster out(unit.height(), unit.width());
  for (std::size_t i = 0; i < unit.size(); ++i) out.pixels()[i] = unit.pixels()[i] >= threshold ? 1.0 : 0.0;
  return out;
}

namespace {

std::map<std::string, fs::path> rasters_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !io::is_supported_raster(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw DataError("duplicate stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace

std::vector<SamplePair> load_dataset(const fs::path& root, ImageSize size) {
  if (size.height < 1 || size.width < 1) throw ConfigError("image_size must be positive");
  const fs::path images_dir = root / "images";
  const fs::path masks_dir = root / "masks";
  if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir)) {
    throw DataError("dataset root '" + root.string() + "' must contain images/ and masks/");
  }
  const auto images = rasters_by_stem(images_dir);
  const auto masks = rasters_by_stem(masks_dir);

  std::vector<std::string> orphans;
  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) orphans.push_back("images/" + path.filename().string());
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) orphans.push_back("masks/" + path.filename().string());
  }
  if (!orphans.empty()) {
    std::ostringstream os;
    os << "files without a counterpart:";
    for (const auto& o : orphans) os << ' ' << o;
    throw DataError(os.str());
  }
  if (images.empty()) throw DataError("dataset '" + root.string() + "' is empty");

  std::vector<SamplePair> pairs;
  pairs.reserve(images.size());
  for (const auto& [stem, image_path] : images) {
    SamplePair p;
    p.id = stem;
    p.image = normalize_image(resize(io::read_grayscale(image_path), size.height, size.width));
    p.mask = binarize(resize(io::read_grayscale(masks.at(stem)), size.height, size.width));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

SplitSizes split_sizes(std::size_t n) {
  if (n < 3) throw DataError("need at least 3 pairs to split, got " + std::to_string(n));
  const std::size_t test = std::max<std::size_t>(1, n * 2 / 10);
  const std::size_t val = std::max<std::size_t>(1, n / 10);
  return {n - test - val, test, val};
}

DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed) {
  const SplitSizes sizes = split_sizes(pairs.size());
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::mt19937_64 rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);

  DatasetSplit split;
  split.seed = seed;
  auto it = std::make_move_iterator(pairs.begin());
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
  it += static_cast<std::ptrdiff_t>(sizes.train);
  split.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
  it += static_cast<std::ptrdiff_t>(sizes.test);
  split.val.assign(it, std::make_move_iterator(pairs.end()));
  return split;
}

void write_split_manifest(const fs::path& path, const DatasetSplit& split) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split manifest '" + path.string() + "'");
  for (const auto& p : split.train) out << p.id << "\ttrain\n";
  for (const auto& p : split.val) out << p.id << "\tval\n";
  for (const auto& p : split.test) out << p.id << "\ttest\n";
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::map<std::string, std::string> read_split_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split manifest '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed split manifest line: " + line);
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

SamplePair augment(const SamplePair& pair, const AugmentationPolicy& policy, std::mt19937_64& rng) {
  SamplePair out = pair;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  // Draw order is fixed so a given rng state yields one outcome.
  const bool hflip = coin(rng) < policy.horizontal_flip_prob;
  const bool vflip = coin(rng) < policy.vertical_flip_prob;
  if (hflip) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  if (vflip) {
    out.image = flip_vertical(out.image);
    out.mask = flip_vertical(out.mask);
  }
  if (policy.random_crop_size) {
    const int h = out.image.height(), w = out.image.width();
    const auto [ch, cw] = *policy.random_crop_size;
    std::uniform_int_distribution<int> top_dist(0, h - ch);
    std::uniform_int_distribution<int> left_dist(0, w - cw);
    const int top = top_dist(rng);
    const int left = left_dist(rng);
    if (ch != h || cw != w) {
      out.image = resize(crop(out.image, top, left, ch, cw), h, w);
      for (double& v : out.image.pixels()) v = std::clamp(v, -1.0, 1.0);
      out.mask = binarize(resize(crop(out.mask, top, left, ch, cw), h, w));
    }
  }
  if (policy.clahe_enabled) {
    out.image = clahe(out.image, policy.clahe_clip_limit, policy.clahe_tile_grid);
  }
  return out;
}

}  // namespace fancgan::data
