#pragma once

#include <cstddef>
#include <vector>

#include "fancgan/tensor.hpp"

namespace fancgan {

// Single-channel 2-D image, row-major.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, double fill = 0.0);
  Raster(int height, int width, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }

  double& at(int y, int x) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<double>& pixels() { return pixels_; }
  const std::vector<double>& pixels() const { return pixels_; }

  double min() const;
  double max() const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

Raster flip_horizontal(const Raster& r);
Raster flip_vertical(const Raster& r);
Raster crop(const Raster& r, int top, int left, int height, int width);
// Area resampling when shrinking, bilinear when enlarging.
Raster resize(const Raster& r, int height, int width);

// Stacks rasters of identical size into an (N, 1, H, W) tensor.
Tensor stack_rasters(const std::vector<const Raster*>& rasters);
// Extracts sample n of an (N, 1, H, W) tensor.
Raster unstack_raster(const Tensor& t, int n);

}  // namespace fancgan
