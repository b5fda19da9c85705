#include "s2e/image_io.hpp"

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "s2e/chip_io.hpp"
#include "s2e/error.hpp"

namespace s2e {

namespace {

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) png_error(png, "read past end of PNG data");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_error_to_exception(png_structp, png_const_charp message) {
  throw Error(ErrorKind::io, std::string("png: ") + message);
}

void png_warning_ignore(png_structp, png_const_charp) {}

std::uint8_t to_byte(float unit) {
  const float v = std::clamp(unit, 0.0f, 1.0f) * 255.0f;
  return static_cast<std::uint8_t>(std::lround(v));
}

}  // namespace

Rgb8Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    fail(ErrorKind::io, "data is not a PNG image");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_to_exception, png_warning_ignore);
  if (!png) fail(ErrorKind::io, "png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  PngReadCursor cursor{bytes};
  png_set_read_fn(png, &cursor, png_read_from_memory);
  png_read_info(png, info);

  const auto color_type = png_get_color_type(png, info);
  const auto bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Rgb8Image image(static_cast<int>(png_get_image_width(png, info)),
                  static_cast<int>(png_get_image_height(png, info)));
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(image.width) * 3) {
    fail(ErrorKind::io, "png: unexpected row layout after expansion");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[y] = image.at(0, y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return image;
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& image) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_to_exception, png_warning_ignore);
  if (!png) fail(ErrorKind::io, "png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.at(0, y)));
  }
  png_write_end(png, nullptr);
  return out;
}

Rgb8Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void write_png(const std::filesystem::path& path, const Rgb8Image& image) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

RasterChip image_to_chip(const Rgb8Image& image, ValueRange range) {
  if (range == ValueRange::raw) fail(ErrorKind::range, "image_to_chip needs unit or unit_signed");
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> data(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float unit = static_cast<float>(image.pixels[i * 3 + c]) / 255.0f;
      data[c * plane + i] = range == ValueRange::unit ? unit : unit * 2.0f - 1.0f;
    }
  }
  return RasterChip(3, image.height, image.width, std::move(data), range);
}

Rgb8Image chip_to_image(const RasterChip& chip) {
  Rgb8Image image(chip.width(), chip.height());
  const auto to_unit = [&](float v) {
    switch (chip.value_range()) {
      case ValueRange::unit_signed: return (v + 1.0f) * 0.5f;
      case ValueRange::unit: return v;
      case ValueRange::raw: return v;
    }
    return v;
  };
  const bool rgb = chip.channels() >= 3;
  for (int y = 0; y < chip.height(); ++y) {
    for (int x = 0; x < chip.width(); ++x) {
      auto* px = image.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = to_byte(to_unit(chip.at(rgb ? c : 0, y, x)));
    }
  }
  return image;
}

Rgb8Image hstack(std::span<const Rgb8Image> panels, std::uint8_t separator) {
  if (panels.empty()) return {};
  constexpr int kGap = 2;
  const int h = panels.front().height;
  int w = 0;
  for (const auto& p : panels) {
    if (p.height != h) fail(ErrorKind::dimension, "hstack panels differ in height");
    w += p.width;
  }
  w += kGap * static_cast<int>(panels.size() - 1);
  Rgb8Image out(w, h, separator);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < h; ++y) std::memcpy(out.at(x0, y), p.at(0, y), p.width * 3);
    x0 += p.width + kGap;
  }
  return out;
}

Rgb8Image vstack(std::span<const Rgb8Image> rows, std::uint8_t separator) {
  if (rows.empty()) return {};
  constexpr int kGap = 2;
  const int w = rows.front().width;
  int h = 0;
  for (const auto& r : rows) {
    if (r.width != w) fail(ErrorKind::dimension, "vstack rows differ in width");
    h += r.height;
  }
  h += kGap * static_cast<int>(rows.size() - 1);
  Rgb8Image out(w, h, separator);
  int y0 = 0;
  for (const auto& r : rows) {
    for (int y = 0; y < r.height; ++y) std::memcpy(out.at(0, y0 + y), r.at(0, y), w * 3);
    y0 += r.height + kGap;
  }
  return out;
}

Grid read_tiff_band(const std::filesystem::path& path) {
  TIFFSetWarningHandler(nullptr);
  std::unique_ptr<TIFF, decltype(&TIFFClose)> tif(TIFFOpen(path.c_str(), "r"), &TIFFClose);
  if (!tif) fail(ErrorKind::io, "cannot open TIFF " + path.string());
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint16_t bits = 0;
  std::uint16_t samples = 1;
  std::uint16_t format = SAMPLEFORMAT_UINT;
  std::uint16_t planar = PLANARCONFIG_CONTIG;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
  if (TIFFIsTiled(tif.get())) fail(ErrorKind::io, "tiled TIFF not supported: " + path.string());
  if (width == 0 || height == 0) fail(ErrorKind::io, "empty TIFF " + path.string());

  const auto sample_value = [&](const std::uint8_t* p) -> float {
    if (format == SAMPLEFORMAT_IEEEFP) {
      if (bits == 32) { float v; std::memcpy(&v, p, 4); return v; }
      if (bits == 64) { double v; std::memcpy(&v, p, 8); return static_cast<float>(v); }
    } else if (format == SAMPLEFORMAT_INT) {
      if (bits == 8) return static_cast<float>(*reinterpret_cast<const std::int8_t*>(p));
      if (bits == 16) { std::int16_t v; std::memcpy(&v, p, 2); return v; }
      if (bits == 32) { std::int32_t v; std::memcpy(&v, p, 4); return static_cast<float>(v); }
    } else {
      if (bits == 8) return *p;
      if (bits == 16) { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
      if (bits == 32) { std::uint32_t v; std::memcpy(&v, p, 4); return static_cast<float>(v); }
    }
    fail(ErrorKind::io, "unsupported TIFF sample layout (" + std::to_string(bits) +
                            " bits, format " + std::to_string(format) + ") in " + path.string());
  };

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t stride = planar == PLANARCONFIG_CONTIG ? samples : 1;
  Grid grid(static_cast<int>(height), static_cast<int>(width));
  std::vector<std::uint8_t> row(static_cast<std::size_t>(TIFFScanlineSize(tif.get())));
  for (std::uint32_t y = 0; y < height; ++y) {
    if (TIFFReadScanline(tif.get(), row.data(), y, 0) < 0) {
      fail(ErrorKind::io, "TIFF read error in " + path.string());
    }
    for (std::uint32_t x = 0; x < width; ++x) {
      grid.at(static_cast<int>(y), static_cast<int>(x)) =
          sample_value(row.data() + x * stride * bytes_per_sample);
    }
  }
  return grid;
}

void write_tiff_band(const std::filesystem::path& path, const Grid& grid) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<TIFF, decltype(&TIFFClose)> tif(TIFFOpen(path.c_str(), "w"), &TIFFClose);
  if (!tif) fail(ErrorKind::io, "cannot create TIFF " + path.string());
  TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(grid.width));
  TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(grid.height));
  TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, 32);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
  TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, 1);
  for (int y = 0; y < grid.height; ++y) {
    if (TIFFWriteScanline(tif.get(),
                          const_cast<float*>(grid.values.data() + static_cast<std::size_t>(y) * grid.width),
                          static_cast<std::uint32_t>(y), 0) < 0) {
      fail(ErrorKind::io, "TIFF write error in " + path.string());
    }
  }
}

Grid read_band(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tif" || ext == ".tiff") return read_tiff_band(path);
  if (ext == ".chip") {
    const auto chip = read_chip(path);
    if (chip.channels() != 1) fail(ErrorKind::io, "band chip must have one channel: " + path.string());
    Grid grid(chip.height(), chip.width());
    std::copy(chip.data().begin(), chip.data().end(), grid.values.begin());
    return grid;
  }
  fail(ErrorKind::io, "unsupported raster extension '" + ext + "' for " + path.string());
}

}  // namespace s2e
