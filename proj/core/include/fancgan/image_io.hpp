#pragma once

#include <filesystem>

#include "fancgan/raster.hpp"

namespace fancgan::io {

// Reads any single- or multi-channel raster as grayscale scaled to [0, 1] of
// its full-scale range (8-bit /255, 16-bit /65535).
Raster read_grayscale(const std::filesystem::path& path);

// [-1, 1] -> [0, 255] with round-half-even, written as 8-bit grayscale.
void write_image_u8(const std::filesystem::path& path, const Raster& image);
// {0, 1} -> {0, 255}.
void write_mask_u8(const std::filesystem::path& path, const Raster& mask);

unsigned char to_u8(double v);

bool is_supported_raster(const std::filesystem::path& path);

}  // namespace fancgan::io
