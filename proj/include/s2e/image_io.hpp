#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "s2e/core.hpp"

namespace s2e {

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  Rgb8Image() = default;
  Rgb8Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const Rgb8Image&) const = default;
};

// PNG of any color type is expanded to 8-bit RGB (alpha dropped).
Rgb8Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Rgb8Image& image);
Rgb8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);

/// 3-channel chip from an RGB image, in unit or unit_signed range.
RasterChip image_to_chip(const Rgb8Image& image, ValueRange range);

/// Renders a chip for display: 3+ channel chips use the first three channels
/// as RGB, others show channel 0 as grayscale.
Rgb8Image chip_to_image(const RasterChip& chip);

/// Horizontal strip of equally sized panels with a 2 px separator.
Rgb8Image hstack(std::span<const Rgb8Image> panels, std::uint8_t separator = 255);
Rgb8Image vstack(std::span<const Rgb8Image> rows, std::uint8_t separator = 255);

/// Single-band raster.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Grid() = default;
  Grid(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Reads band 1 of a TIFF (8/16/32-bit integer or 32/64-bit float samples).
Grid read_tiff_band(const std::filesystem::path& path);
void write_tiff_band(const std::filesystem::path& path, const Grid& grid);

/// Reads a single-band raster from .tif/.tiff or a 1-channel .chip file.
Grid read_band(const std::filesystem::path& path);

}  // namespace s2e
