#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace s2e {

// Every chip handed to the model uses unit_signed; ingest converts.
enum class ValueRange : std::uint8_t { unit_signed = 0, unit = 1, raw = 2 };

const char* to_string(ValueRange range);
ValueRange parse_value_range(std::string_view text);

struct GeoInfo {
  double center_lat = 0.0;         // degrees
  double center_lon = 0.0;         // degrees
  double ground_resolution = 0.0;  // meters per pixel

  bool operator==(const GeoInfo&) const = default;
};

/// Fixed-size multi-channel image tile, channel-major (C x H x W).
///
/// Immutable after construction: all accessors are const, so chips can be
/// shared between workers freely. The constructor validates the value range
/// (raw is exempt), the geo bounds and the nodata mask extent.
class RasterChip {
 public:
  // Model-facing chip edge length.
  static constexpr int kModelSize = 256;

  RasterChip() = default;
  RasterChip(int channels, int height, int width, std::vector<float> data,
             ValueRange range, std::optional<GeoInfo> geo = std::nullopt,
             std::optional<std::vector<std::uint8_t>> nodata_mask = std::nullopt);

  /// Constant-valued chip.
  static RasterChip filled(int channels, int height, int width, float value,
                           ValueRange range);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const noexcept { return data_.empty(); }

  ValueRange value_range() const noexcept { return range_; }
  const std::optional<GeoInfo>& geo() const noexcept { return geo_; }
  const std::optional<std::vector<std::uint8_t>>& nodata_mask() const noexcept {
    return mask_;
  }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> channel(int c) const;
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  // Copies with one attribute replaced; the source chip is untouched.
  RasterChip with_geo(std::optional<GeoInfo> geo) const;
  RasterChip with_mask(std::optional<std::vector<std::uint8_t>> mask) const;

  bool same_pixels(const RasterChip& other) const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
  ValueRange range_ = ValueRange::raw;
  std::optional<GeoInfo> geo_;
  std::optional<std::vector<std::uint8_t>> mask_;
};

enum class ModalityKind : std::uint8_t {
  sar_dual_pol,
  sar_quad_pol,
  eo_rgb,
  map_rgb,
  ir_single,
  latlon_planes,
};

const char* to_string(ModalityKind kind);
ModalityKind parse_modality(std::string_view text);

// sar_dual_pol 3, sar_quad_pol 4, eo_rgb 3, map_rgb 3, ir_single 1,
// latlon_planes 2.
constexpr int channel_count(ModalityKind kind) {
  switch (kind) {
    case ModalityKind::sar_dual_pol: return 3;
    case ModalityKind::sar_quad_pol: return 4;
    case ModalityKind::eo_rgb: return 3;
    case ModalityKind::map_rgb: return 3;
    case ModalityKind::ir_single: return 1;
    case ModalityKind::latlon_planes: return 2;
  }
  return 0;
}

struct Modality {
  ModalityKind kind;
  int channel_count() const { return s2e::channel_count(kind); }
  bool operator==(const Modality&) const = default;
};

enum class Split : std::uint8_t { train, test };

const char* to_string(Split split);
Split parse_split(std::string_view text);

/// Ordered list of conditioning modalities beyond the SAR input. Empty means
/// the SAR-only baseline.
using Conditioning = std::vector<ModalityKind>;

/// Parses "sar", "sar+map", "sar+ir", "sar+latlon", "sar+map+ir", ...
Conditioning parse_conditioning(std::string_view spec);
std::string conditioning_to_string(const Conditioning& conditioning);
int conditioning_channels(const Conditioning& conditioning);

/// Aligned (SAR, conditions, EO target) record.
struct Sample {
  std::string id;
  RasterChip sar;
  RasterChip target_eo;
  std::vector<std::pair<Modality, RasterChip>> conditions;
  std::string source_id;
  Split split = Split::train;

  /// Throws a dimension error if any chip differs in H x W from the SAR chip.
  void validate() const;

  std::vector<RasterChip> condition_chips() const;
};

/// Channel-wise concatenation: SAR channels first, then each condition in
/// list order. Pixel values are copied bit-for-bit.
RasterChip concat_conditioning(const RasterChip& sar,
                               std::span<const RasterChip> conditions);

/// Two constant planes: lat / 90 and lon / 180.
RasterChip latlon_to_planes(double lat, double lon, int height, int width);

}  // namespace s2e
