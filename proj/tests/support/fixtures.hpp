#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "fancgan/networks.hpp"
#include "fancgan/tensor.hpp"
#include "fancgan/training.hpp"

namespace fancgan::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(shape), rng, lo, hi);
}

// Small enough for a training step to take a fraction of a second.
inline train::ModelConfig small_model(int size = 32) {
  train::ModelConfig m;
  m.image_size = {size, size};
  m.generator.depth = 2;
  m.generator.base_width = 4;
  m.generator.latent_dim = 8;
  m.generator.style_dim = 8;
  m.generator.mapping_layers = 2;
  m.segmenter.depth = 2;
  m.segmenter.base_width = 4;
  m.discriminator.base_width = 4;
  m.discriminator.strided_layers = 2;
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fancgan_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace fancgan::testing
