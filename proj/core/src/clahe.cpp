#include <algorithm>
#include <array>
#include <cmath>

#include "fancgan/data.hpp"
#include "fancgan/error.hpp"

namespace fancgan::data {
namespace {

constexpr int kLevels = 256;
using Lut = std::array<double, kLevels>;

int to_level(double v) {
  const double l = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * (kLevels - 1);
  return static_cast<int>(std::lround(l));
}

// Mid-rank mapping: a uniform histogram maps every level onto itself.
Lut tile_lut(const std::array<double, kLevels>& counts, double total, double clip_limit) {
  std::array<double, kLevels> hist = counts;
  const double clip = clip_limit * total / kLevels;
  double excess = 0.0;
  for (double& h : hist) {
    if (h > clip) {
      excess += h - clip;
      h = clip;
    }
  }
  const double share = excess / kLevels;
  for (double& h : hist) h += share;

  Lut lut{};
  double below = 0.0;
  for (int v = 0; v < kLevels; ++v) {
    const double mid = below + 0.5 * hist[static_cast<std::size_t>(v)];
    lut[static_cast<std::size_t>(v)] =
        std::clamp(kLevels * mid / total - 0.5, 0.0, static_cast<double>(kLevels - 1));
    below += hist[static_cast<std::size_t>(v)];
  }
  return lut;
}

// Index pair and weight for interpolating between tile centres along an axis.
struct AxisWeight {
  int lo, hi;
  double t;
};

AxisWeight axis_weight(int pos, int tile, int tiles) {
  const double f = (pos + 0.5) / tile - 0.5;
  if (f <= 0.0) return {0, 0, 0.0};
  const int lo = static_cast<int>(std::floor(f));
  if (lo >= tiles - 1) return {tiles - 1, tiles - 1, 0.0};
  return {lo, lo + 1, f - lo};
}

}  // namespace

Raster clahe(const Raster& image, double clip_limit, TileGrid tiles) {
  if (!(clip_limit > 0.0)) throw ValidationError("clahe: clip_limit must be positive");
  if (tiles.rows < 1 || tiles.cols < 1) throw ValidationError("clahe: tile grid must be positive");
  const int h = image.height(), w = image.width();
  if (h == 0 || w == 0) return image;
  if (tiles.rows > h || tiles.cols > w) {
    throw ValidationError("clahe: tile grid larger than image");
  }
  const int th = (h + tiles.rows - 1) / tiles.rows;
  const int tw = (w + tiles.cols - 1) / tiles.cols;

  std::vector<int> levels(image.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = to_level(image.pixels()[i]);

  // Histograms over the edge-replicated padded canvas.
  std::vector<Lut> luts(static_cast<std::size_t>(tiles.rows) * tiles.cols);
  for (int ty = 0; ty < tiles.rows; ++ty) {
    for (int tx = 0; tx < tiles.cols; ++tx) {
      std::array<double, kLevels> counts{};
      for (int y = ty * th; y < (ty + 1) * th; ++y) {
        const int sy = std::min(y, h - 1);
        for (int x = tx * tw; x < (tx + 1) * tw; ++x) {
          const int sx = std::min(x, w - 1);
          counts[static_cast<std::size_t>(levels[static_cast<std::size_t>(sy) * w + sx])] += 1.0;
        }
      }
      luts[static_cast<std::size_t>(ty) * tiles.cols + tx] =
          tile_lut(counts, static_cast<double>(th) * tw, clip_limit);
    }
  }

  Raster out(h, w);
  for (int y = 0; y < h; ++y) {
    const AxisWeight ay = axis_weight(y, th, tiles.rows);
    for (int x = 0; x < w; ++x) {
      const AxisWeight ax = axis_weight(x, tw, tiles.cols);
      const auto lv = static_cast<std::size_t>(levels[static_cast<std::size_t>(y) * w + x]);
      auto lut = [&](int r, int c) {
        return luts[static_cast<std::size_t>(r) * tiles.cols + c][lv];
      };
      const double top = (1 - ax.t) * lut(ay.lo, ax.lo) + ax.t * lut(ay.lo, ax.hi);
      const double bottom = (1 - ax.t) * lut(ay.hi, ax.lo) + ax.t * lut(ay.hi, ax.hi);
      const double level = (1 - ay.t) * top + ay.t * bottom;
      out.at(y, x) = std::clamp(level / (kLevels - 1) * 2.0 - 1.0, -1.0, 1.0);
    }
  }
  return out;
}

}  // namespace fancgan::data
