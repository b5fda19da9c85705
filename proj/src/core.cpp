#include "s2e/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "s2e/error.hpp"

namespace s2e {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::range: return "range";
    case ErrorKind::validation: return "validation";
    case ErrorKind::modality: return "modality";
    case ErrorKind::empty_corpus: return "empty-corpus";
    case ErrorKind::window: return "window";
    case ErrorKind::projection: return "projection";
    case ErrorKind::missing_tile: return "missing-tile";
    case ErrorKind::fetch: return "fetch";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numeric: return 4;
    case ErrorKind::io:
    case ErrorKind::fetch: return 5;
    default: return 3;
  }
}

const char* to_string(ValueRange range) {
  switch (range) {
    case ValueRange::unit_signed: return "unit_signed";
    case ValueRange::unit: return "unit";
    case ValueRange::raw: return "raw";
  }
  return "raw";
}

ValueRange parse_value_range(std::string_view text) {
  if (text == "unit_signed") return ValueRange::unit_signed;
  if (text == "unit") return ValueRange::unit;
  if (text == "raw") return ValueRange::raw;
  fail(ErrorKind::validation, "unknown value range '" + std::string(text) + "'");
}

namespace {

void check_range(std::span<const float> values, ValueRange range) {
  float lo = 0.0f;
  float hi = 1.0f;
  if (range == ValueRange::raw) return;
  if (range == ValueRange::unit_signed) lo = -1.0f;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!(v >= lo && v <= hi)) {
      fail(ErrorKind::range, "chip value " + std::to_string(v) + " at index " +
                                 std::to_string(i) + " outside declared range " +
                                 to_string(range));
    }
  }
}

}  // namespace

RasterChip::RasterChip(int channels, int height, int width, std::vector<float> data,
                       ValueRange range, std::optional<GeoInfo> geo,
                       std::optional<std::vector<std::uint8_t>> nodata_mask)
    : channels_(channels),
      height_(height),
      width_(width),
      data_(std::move(data)),
      range_(range),
      geo_(geo),
      mask_(std::move(nodata_mask)) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    fail(ErrorKind::dimension, "chip dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * plane_size()) {
    fail(ErrorKind::dimension, "chip data size " + std::to_string(data_.size()) +
                                   " does not match " + std::to_string(channels) + "x" +
                                   std::to_string(height) + "x" + std::to_string(width));
  }
  check_range(data_, range_);
  if (geo_) {
    if (!(geo_->center_lat >= -90.0 && geo_->center_lat <= 90.0) ||
        !(geo_->center_lon >= -180.0 && geo_->center_lon <= 180.0)) {
      fail(ErrorKind::validation, "geo center outside [-90,90] x [-180,180]");
    }
  }
  if (mask_ && mask_->size() != plane_size()) {
    fail(ErrorKind::dimension, "nodata mask extent differs from chip extent");
  }
}

RasterChip RasterChip::filled(int channels, int height, int width, float value,
                              ValueRange range) {
  std::vector<float> data(static_cast<std::size_t>(channels) * height * width, value);
  return RasterChip(channels, height, width, std::move(data), range);
}

std::span<const float> RasterChip::channel(int c) const {
  if (c < 0 || c >= channels_) fail(ErrorKind::dimension, "channel index out of range");
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                               plane_size());
}

RasterChip RasterChip::with_geo(std::optional<GeoInfo> geo) const {
  RasterChip copy = *this;
  copy.geo_ = geo;
  return copy;
}

RasterChip RasterChip::with_mask(std::optional<std::vector<std::uint8_t>> mask) const {
  if (mask && mask->size() != plane_size()) {
    fail(ErrorKind::dimension, "nodata mask extent differs from chip extent");
  }
  RasterChip copy = *this;
  copy.mask_ = std::move(mask);
  return copy;
}

bool RasterChip::same_pixels(const RasterChip& other) const {
  return channels_ == other.channels_ && height_ == other.height_ &&
         width_ == other.width_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

const char* to_string(ModalityKind kind) {
  switch (kind) {
    case ModalityKind::sar_dual_pol: return "sar_dual_pol";
    case ModalityKind::sar_quad_pol: return "sar_quad_pol";
    case ModalityKind::eo_rgb: return "eo_rgb";
    case ModalityKind::map_rgb: return "map_rgb";
    case ModalityKind::ir_single: return "ir_single";
    case ModalityKind::latlon_planes: return "latlon_planes";
  }
  return "unknown";
}

ModalityKind parse_modality(std::string_view text) {
  for (auto kind : {ModalityKind::sar_dual_pol, ModalityKind::sar_quad_pol,
                    ModalityKind::eo_rgb, ModalityKind::map_rgb, ModalityKind::ir_single,
                    ModalityKind::latlon_planes}) {
    if (text == to_string(kind)) return kind;
  }
  fail(ErrorKind::modality, "unknown modality '" + std::string(text) + "'");
}

const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  fail(ErrorKind::validation, "unknown split '" + std::string(text) + "'");
}

Conditioning parse_conditioning(std::string_view spec) {
  Conditioning out;
  std::size_t start = 0;
  bool first = true;
  while (start <= spec.size()) {
    const auto end = std::min(spec.find('+', start), spec.size());
    const auto token = spec.substr(start, end - start);
    if (first) {
      if (token != "sar") {
        fail(ErrorKind::config, "conditioning spec must start with 'sar': '" +
                                    std::string(spec) + "'");
      }
      first = false;
    } else if (token == "map") {
      out.push_back(ModalityKind::map_rgb);
    } else if (token == "ir") {
      out.push_back(ModalityKind::ir_single);
    } else if (token == "latlon") {
      out.push_back(ModalityKind::latlon_planes);
    } else {
      fail(ErrorKind::config, "unknown conditioning modality '" + std::string(token) + "'");
    }
    if (!out.empty() && std::count(out.begin(), out.end(), out.back()) > 1) {
      fail(ErrorKind::config, "duplicate conditioning modality in '" + std::string(spec) + "'");
    }
    start = end + 1;
  }
  return out;
}

std::string conditioning_to_string(const Conditioning& conditioning) {
  std::string out = "sar";
  for (auto kind : conditioning) {
    switch (kind) {
      case ModalityKind::map_rgb: out += "+map"; break;
      case ModalityKind::ir_single: out += "+ir"; break;
      case ModalityKind::latlon_planes: out += "+latlon"; break;
      default: fail(ErrorKind::config, std::string("modality ") + to_string(kind) +
                                           " cannot be used as conditioning");
    }
  }
  return out;
}

int conditioning_channels(const Conditioning& conditioning) {
  int total = 0;
  for (auto kind : conditioning) total += channel_count(kind);
  return total;
}

void Sample::validate() const {
  const auto check = [&](const RasterChip& chip, const char* what) {
    if (chip.height() != sar.height() || chip.width() != sar.width()) {
      fail(ErrorKind::dimension, std::string("sample ") + id + ": " + what +
                                     " extent differs from SAR extent");
    }
  };
  check(target_eo, "EO target");
  for (const auto& [modality, chip] : conditions) {
    check(chip, to_string(modality.kind));
    if (chip.channels() != modality.channel_count()) {
      fail(ErrorKind::modality, std::string("sample ") + id + ": " +
                                    to_string(modality.kind) + " chip has " +
                                    std::to_string(chip.channels()) + " channels");
    }
  }
}

std::vector<RasterChip> Sample::condition_chips() const {
  std::vector<RasterChip> out;
  out.reserve(conditions.size());
  for (const auto& [modality, chip] : conditions) out.push_back(chip);
  return out;
}

RasterChip concat_conditioning(const RasterChip& sar, std::span<const RasterChip> conditions) {
  int total_channels = sar.channels();
  for (const auto& chip : conditions) {
    if (chip.height() != sar.height() || chip.width() != sar.width()) {
      fail(ErrorKind::dimension, "conditioning chip is " + std::to_string(chip.height()) +
                                     "x" + std::to_string(chip.width()) + ", SAR is " +
                                     std::to_string(sar.height()) + "x" +
                                     std::to_string(sar.width()));
    }
    if (chip.value_range() != sar.value_range()) {
      fail(ErrorKind::range, std::string("conditioning chip range ") +
                                 to_string(chip.value_range()) + " differs from SAR range " +
                                 to_string(sar.value_range()));
    }
    total_channels += chip.channels();
  }
  if (sar.value_range() != ValueRange::unit_signed) {
    fail(ErrorKind::range, "concat_conditioning expects unit_signed chips");
  }
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(total_channels) * sar.plane_size());
  data.insert(data.end(), sar.data().begin(), sar.data().end());
  for (const auto& chip : conditions) data.insert(data.end(), chip.data().begin(), chip.data().end());
  return RasterChip(total_channels, sar.height(), sar.width(), std::move(data),
                    ValueRange::unit_signed, sar.geo());
}

RasterChip latlon_to_planes(double lat, double lon, int height, int width) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    fail(ErrorKind::validation, "coordinates (" + std::to_string(lat) + ", " +
                                    std::to_string(lon) + ") outside [-90,90] x [-180,180]");
  }
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<float> data(2 * plane);
  std::fill_n(data.begin(), plane, static_cast<float>(lat / 90.0));
  std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(plane), plane,
              static_cast<float>(lon / 180.0));
  return RasterChip(2, height, width, std::move(data), ValueRange::unit_signed);
}

}  // namespace s2e
