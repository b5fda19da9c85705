#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/image_io.hpp"
#include "s2e/manifest.hpp"

namespace s2e {

struct IngestConfig {
  int chip_size = 256;
  int chip_stride = 256;
  double v_mean_threshold = 0.2;
  double occlusion_max_fraction = 0.10;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;

  // |VV| / (|VH| + ratio_epsilon), clipped to ratio_clip.
  double ratio_epsilon = 1e-6;
  double ratio_clip = 10.0;
  // Percentiles (in %) of the training corpus that bound SAR normalization.
  double percentile_lo = 1.0;
  double percentile_hi = 99.0;
  bool apply_cloud_filter = true;

  void validate() const;
};

/// Dual-pol composition R = VV, G = VH, B = |VV| / (|VH| + eps) clipped to
/// cfg.ratio_clip. Returns a raw-range chip; pixels where both bands equal
/// `nodata` are flagged in the nodata mask (ratio set to 0).
RasterChip compose_dual_pol(const Grid& vv, const Grid& vh, const IngestConfig& cfg = {},
                            std::optional<float> nodata = std::nullopt);

/// Quad-pol composition in channel order HH, HV, VH, VV (raw range).
RasterChip compose_quad_pol(const Grid& hh, const Grid& hv, const Grid& vh, const Grid& vv,
                            std::optional<float> nodata = std::nullopt);

/// Mean of the HSV value channel, V = max(R, G, B), over a unit-range RGB chip.
double mean_hsv_value(const RasterChip& eo_rgb);

/// Keep iff mean V exceeds `threshold`.
bool cloud_filter(const RasterChip& eo_rgb, double threshold);

struct ChipWindow {
  int row = 0;  // top-left pixel
  int col = 0;
  bool operator==(const ChipWindow&) const = default;
};

struct ChipSceneResult {
  std::vector<ChipWindow> windows;
  std::vector<RasterChip> chips;
  std::size_t dropped_occluded = 0;
  bool undersized = false;  // scene smaller than the chip size; no chips produced
};

/// Grid windows at cfg.chip_stride, row-major, whose nodata fraction does not
/// exceed cfg.occlusion_max_fraction. `mask` may be null (no nodata).
std::vector<ChipWindow> chip_windows(int height, int width,
                                     const std::vector<std::uint8_t>* mask,
                                     const IngestConfig& cfg,
                                     std::size_t* dropped_occluded = nullptr);

ChipSceneResult chip_scene(const RasterChip& scene, const IngestConfig& cfg);

/// Exact crop (no resampling); the geo center is shifted to the crop center.
RasterChip crop_chip(const RasterChip& scene, ChipWindow window, int size);

/// Per-channel [lo, hi] percentiles over the given raw chips, skipping
/// nodata pixels. Percentiles use linear interpolation between order
/// statistics.
std::vector<ChannelBounds> compute_sar_bounds(std::span<const RasterChip> chips,
                                              double percentile_lo, double percentile_hi);

/// Clip to bounds and map linearly to [-1, 1].
RasterChip normalize_sar(const RasterChip& raw, std::span<const ChannelBounds> bounds);

/// unit [0,1] -> unit_signed [-1,1].
RasterChip to_unit_signed(const RasterChip& unit_chip);

/// One co-registered input scene before chipping.
struct SceneRecord {
  std::string source_id;
  ModalityKind sar_kind = ModalityKind::sar_dual_pol;
  RasterChip sar_raw;                // composed SAR, raw range, optional nodata mask
  RasterChip eo;                     // RGB, unit range
  std::optional<RasterChip> map;     // RGB, unit range
  std::optional<RasterChip> ir;      // 1 channel, unit range
  GeoInfo geo;
};

struct IngestSummary {
  std::size_t scenes = 0;
  std::size_t rejected_cloud = 0;
  std::size_t undersized = 0;
  std::size_t chips_occluded = 0;
  std::size_t samples = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
};

/// cloud filter -> chip -> split by source -> normalize -> write chips and
/// manifest.jsonl under `out_dir`. Output is independent of the input order.
Manifest build_manifest(std::span<const SceneRecord> scenes, const IngestConfig& cfg,
                        const std::filesystem::path& out_dir,
                        const std::string& dataset_name,
                        IngestSummary* summary = nullptr);

struct DatasetPreset {
  std::string name;
  ModalityKind sar_kind;
  bool apply_cloud_filter;
};

/// sen12ms, dfc2020 (dual-pol, cloud filtered), spacenet6 (quad-pol, masked
/// chips), generic (dual-pol, cloud filtered).
DatasetPreset dataset_preset(const std::string& name);

/// Reads `<input>/<scene>/` directories (layout in docs/formats.md).
std::vector<SceneRecord> load_scene_directory(const std::filesystem::path& input_dir,
                                              const DatasetPreset& preset,
                                              const IngestConfig& cfg);

inline constexpr const char* kManifestFileName = "manifest.jsonl";

}  // namespace s2e
