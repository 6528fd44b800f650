#include "fancgan/raster.hpp"

#include <algorithm>
#include <opencv2/imgproc.hpp>

#include "fancgan/error.hpp"

namespace fancgan {

Raster::Raster(int height, int width, double fill)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  if (height < 0 || width < 0) throw ShapeError("raster dimensions must be non-negative");
}

Raster::Raster(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height < 0 || width < 0 ||
      pixels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("raster pixel count does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

double Raster::min() const { return *std::min_element(pixels_.begin(), pixels_.end()); }
double Raster::max() const { return *std::max_element(pixels_.begin(), pixels_.end()); }

Raster flip_horizontal(const Raster& r) {
  Raster out(r.height(), r.width());
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) out.at(y, x) = r.at(y, r.width() - 1 - x);
  return out;
}

Raster flip_vertical(const Raster& r) {
  Raster out(r.height(), r.width());
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) out.at(y, x) = r.at(r.height() - 1 - y, x);
  return out;
}

Raster crop(const Raster& r, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > r.height() ||
      left + width > r.width()) {
    throw ShapeError("crop window exceeds raster bounds");
  }
  Raster out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = r.at(top + y, left + x);
  return out;
}

Raster resize(const Raster& r, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize target must be positive");
  if (height == r.height() && width == r.width()) return r;
  cv::Mat src(r.height(), r.width(), CV_64F, const_cast<double*>(r.pixels().data()));
  cv::Mat dst;
  const bool shrink = height < r.height() || width < r.width();
  cv::resize(src, dst, cv::Size(width, height), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  std::vector<double> px(dst.begin<double>(), dst.end<double>());
  return Raster(height, width, std::move(px));
}

Tensor stack_rasters(const std::vector<const Raster*>& rasters) {
  if (rasters.empty()) throw ShapeError("stack_rasters: empty list");
  const int h = rasters.front()->height(), w = rasters.front()->width();
  Tensor t({static_cast<int>(rasters.size()), 1, h, w});
  std::size_t off = 0;
  for (const Raster* r : rasters) {
    if (r->height() != h || r->width() != w) throw ShapeError("stack_rasters: size mismatch");
    std::copy(r->pixels().begin(), r->pixels().end(), t.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += r->size();
  }
  return t;
}

Raster unstack_raster(const Tensor& t, int n) {
  if (t.rank() != 4 || t.dim(1) != 1 || n < 0 || n >= t.dim(0)) {
    throw ShapeError("unstack_raster: bad tensor " + shape_str(t.shape()));
  }
  const int h = t.dim(2), w = t.dim(3);
  const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(n) * h * w;
  return Raster(h, w, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(h) * w));
}

}  // namespace fancgan
