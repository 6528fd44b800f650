#include "fancgan/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fancgan/error.hpp"
#include "fancgan/image_io.hpp"

namespace fancgan::gen {
namespace {

void check_size(const Raster& r, std::optional<data::ImageSize> expected, const char* what) {
  if (expected && (r.height() != expected->height || r.width() != expected->width)) {
    std::ostringstream os;
    os << what << ": input is " << r.height() << "x" << r.width() << " but the model expects "
       << expected->height << "x" << expected->width;
    throw ShapeError(os.str());
  }
}

double draw(std::mt19937_64& rng, std::pair<double, double> range) {
  if (range.first == range.second) return range.first;
  return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

// Half extents of the bounding box of a rotated ellipse.
std::pair<double, double> half_extent(double a, double b, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {std::sqrt(a * a * s * s + b * b * c * c), std::sqrt(a * a * c * c + b * b * s * s)};
}

// Pixel centres (y + 0.5, x + 0.5) inside the ellipse; always includes the
// pixel holding the centre so tiny particles are never lost.
std::vector<std::pair<int, int>> rasterize(const Ellipse& e, int height, int width) {
  const auto [hy, hx] = half_extent(e.a, e.b, e.angle);
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - hy - 1)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + hy + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - hx - 1)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + hx + 1)));
  std::vector<std::pair<int, int>> px;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (e.radial2(y + 0.5, x + 0.5) <= 1.0) px.emplace_back(y, x);
  const int cy = std::clamp(static_cast<int>(std::floor(e.cy)), 0, height - 1);
  const int cx = std::clamp(static_cast<int>(std::floor(e.cx)), 0, width - 1);
  if (std::find(px.begin(), px.end(), std::make_pair(cy, cx)) == px.end()) px.emplace_back(cy, cx);
  return px;
}

bool touches(const Raster& mask, const std::vector<std::pair<int, int>>& px) {
  for (const auto& [y, x] : px) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= mask.height() || xx >= mask.width()) continue;
        if (mask.at(yy, xx) > 0.5) return true;
      }
  }
  return false;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Raster generate_with_latent(const Raster& mask, const nn::StyleUNet& generator, const Tensor& z,
                            std::uint64_t noise_seed) {
  const Var out = generator.forward(constant(stack_rasters({&mask})), z, noise_seed);
  return unstack_raster(out.value(), 0);
}

Raster generate(const Raster& mask, const nn::StyleUNet& generator, std::uint64_t seed,
                std::optional<data::ImageSize> expected) {
  check_size(mask, expected, "generate");
  std::mt19937_64 rng(seed);
  const Tensor z = Tensor::randn({1, generator.config().latent_dim}, rng);
  const std::uint64_t noise_seed = rng();
  return generate_with_latent(mask, generator, z, noise_seed);
}

Raster segment_probabilities(const Raster& image, const nn::AttentionUNet& segmenter,
                             std::optional<data::ImageSize> expected) {
  check_size(image, expected, "segment");
  return unstack_raster(segmenter.forward(constant(stack_rasters({&image}))).value(), 0);
}

Raster segment(const Raster& image, const nn::AttentionUNet& segmenter, double threshold,
               std::optional<data::ImageSize> expected) {
  Raster p = segment_probabilities(image, segmenter, expected);
  for (double& v : p.pixels()) v = v >= threshold ? 1.0 : 0.0;
  return p;
}

void MaskSynthesisSpec::validate() const {
  if (canvas.height < 1 || canvas.width < 1) throw ConfigError("mask canvas must be positive");
  const auto [c0, c1] = particle_count_range;
  if (c0 < 0 || c1 < c0) {
    throw ConfigError("particle_count_range must satisfy 0 <= min <= max, got (" + std::to_string(c0) +
                      ", " + std::to_string(c1) + ")");
  }
  const auto [r0, r1] = radius_range;
  if (!(r0 > 0.0) || !(r1 >= r0) || !std::isfinite(r1)) {
    throw ConfigError("radius_range must satisfy 0 < min <= max");
  }
  const auto [e0, e1] = ellipticity_range;
  if (!(e0 >= 0.0) || !(e1 >= e0) || !(e1 < 1.0)) {
    throw ConfigError("ellipticity_range must satisfy 0 <= min <= max < 1");
  }
  const double longest = r1 / std::sqrt(1.0 - e1);
  if (2.0 * longest > std::min(canvas.height, canvas.width)) {
    throw ConfigError("particles with radius " + std::to_string(r1) + " and ellipticity " +
                      std::to_string(e1) + " do not fit the canvas");
  }
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

double Ellipse::radial2(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return (u * u) / (a * a) + (v * v) / (b * b);
}

SynthesizedMask synthesize_mask(const MaskSynthesisSpec& spec, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, index));
  const int h = spec.canvas.height, w = spec.canvas.width;
  const auto [c0, c1] = spec.particle_count_range;
  const int count = std::uniform_int_distribution<int>(c0, c1)(rng);
  SynthesizedMask out{Raster(h, w), {}};
  for (int p = 0; p < count; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      const double r = draw(rng, spec.radius_range);
      const double e = draw(rng, spec.ellipticity_range);
      Ellipse el{0, 0, r / std::sqrt(1.0 - e), r * std::sqrt(1.0 - e),
                 std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng)};
      const auto [hy, hx] = half_extent(el.a, el.b, el.angle);
      el.cy = draw(rng, {hy, std::max(hy, h - hy)});
      el.cx = draw(rng, {hx, std::max(hx, w - hx)});
      const auto px = rasterize(el, h, w);
      if (!spec.overlap_allowed && touches(out.mask, px)) continue;
      for (const auto& [y, x] : px) out.mask.at(y, x) = 1.0;
      out.particles.push_back(el);
      placed = true;
    }
    if (!placed) {
      throw DensityError("could not place particle " + std::to_string(p + 1) + " of " +
                             std::to_string(count) + " without overlap after " +
                             std::to_string(spec.max_attempts) + " attempts (placed " +
                             std::to_string(p) + ")",
                         p);
    }
  }
  return out;
}

std::vector<Raster> synthesize_masks(const MaskSynthesisSpec& spec, int count) {
  if (count < 0) throw ConfigError("mask count must be >= 0");
  std::vector<Raster> masks;
  masks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) masks.push_back(synthesize_mask(spec, static_cast<std::size_t>(i)).mask);
  return masks;
}

void PostProcessSpec::validate() const {
  if (!(brightness_shift >= -1.0 && brightness_shift <= 1.0)) {
    throw ConfigError("brightness_shift must lie in [-1, 1]");
  }
  if (!(exposure_gain > 0.0) || !std::isfinite(exposure_gain)) {
    throw ConfigError("exposure_gain must be a positive finite value");
  }
  if (!(shadow_lift >= 0.0 && shadow_lift <= 1.0 / 3.0)) {
    throw ConfigError("shadow_lift must lie in [0, 1/3]");
  }
  if (!(highlight_cut >= 0.0 && highlight_cut <= 1.0 / 3.0)) {
    throw ConfigError("highlight_cut must lie in [0, 1/3]");
  }
}

bool PostProcessSpec::is_identity() const {
  return brightness_shift == 0.0 && exposure_gain == 1.0 && shadow_lift == 0.0 && highlight_cut == 0.0;
}

double post_process_unit(double u, const PostProcessSpec& spec) {
  u = std::clamp(u * spec.exposure_gain, 0.0, 1.0);
  u = std::clamp(u + spec.brightness_shift, 0.0, 1.0);
  u += spec.shadow_lift * (1.0 - u) * std::max(0.0, 0.5 - u) * 2.0;
  u -= spec.highlight_cut * u * std::max(0.0, u - 0.5) * 2.0;
  return std::clamp(u, 0.0, 1.0);
}

Raster post_process(const Raster& image, const PostProcessSpec& spec) {
  spec.validate();
  if (spec.is_identity()) return image;
  Raster out = image;
  for (double& v : out.pixels()) {
    const double u = post_process_unit((std::clamp(v, -1.0, 1.0) + 1.0) / 2.0, spec);
    v = std::clamp(2.0 * u - 1.0, -1.0, 1.0);
  }
  return out;
}

MaskSynthesisSpec toy_mask_spec(int size, std::uint64_t seed) {
  MaskSynthesisSpec spec;
  spec.canvas = {size, size};
  spec.particle_count_range = {2, 4};
  spec.radius_range = {size / 16.0, size / 9.0};
  spec.ellipticity_range = {0.0, 0.35};
  spec.overlap_allowed = false;
  spec.seed = seed;
  return spec;
}

std::vector<data::SamplePair> make_toy_dataset(int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 8) throw ConfigError("toy dataset needs count >= 1 and size >= 8");
  const MaskSynthesisSpec spec = toy_mask_spec(size, seed);
  std::vector<data::SamplePair> pairs;
  for (int i = 0; i < count; ++i) {
    const SynthesizedMask m = synthesize_mask(spec, static_cast<std::size_t>(i));
    std::mt19937_64 rng(derive_seed(seed ^ 0x5eedULL, static_cast<std::size_t>(i)));
    std::normal_distribution<double> noise(0.0, 0.03);
    const double gy = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    const double gx = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    Raster image(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = -0.7 + gy * (y / double(size) - 0.5) + gx * (x / double(size) - 0.5);
        for (const Ellipse& e : m.particles) {
          const double q = e.radial2(y + 0.5, x + 0.5);
          if (q <= 1.0) v = std::max(v, 0.05 + 0.75 * std::sqrt(1.0 - q));
        }
        if (m.mask.at(y, x) > 0.5) v = std::max(v, 0.05);
        image.at(y, x) = std::clamp(v + noise(rng), -1.0, 1.0);
      }
    char id[32];
    std::snprintf(id, sizeof id, "toy_%04d", i);
    pairs.push_back({id, std::move(image), m.mask});
  }
  return pairs;
}

void write_dataset(const std::filesystem::path& root, const std::vector<data::SamplePair>& pairs) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  for (const auto& p : pairs) {
    io::write_image_u8(root / "images" / (p.id + ".png"), p.image);
    io::write_mask_u8(root / "masks" / (p.id + ".png"), p.mask);
  }
}

}  // namespace fancgan::gen
