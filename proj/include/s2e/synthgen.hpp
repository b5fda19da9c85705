#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/image_io.hpp"
#include "s2e/ingest.hpp"
#include "s2e/manifest.hpp"

namespace s2e {

/// Procedural scene. Land-cover classes and how each sensor sees them:
///
///   class        EO              SAR            map
///   vegetation   textured green  medium         light gray
///   building     gray roof       bright         tan
///   road         gray asphalt    dark           white
///   water        blue            dark           light blue
///   field        yellow-brown    = vegetation   pale green
///
/// Roads and water share one SAR signature and fields look like vegetation,
/// so SAR alone cannot tell them apart while the map can.
struct SceneSpec {
  std::uint64_t seed = 0;
  int size = 256;       // pixels, >= 64
  int n_shapes = 0;     // 0 picks a size-proportional default
  double speckle_strength = 0.5;
  int misalignment = 0;  // map shift in pixels
  double ground_resolution = 0.5;

  void validate() const;
};

enum class LandCover : std::uint8_t { vegetation, building, road, water, field };

struct SyntheticScene {
  Grid vv;           // raw backscatter
  Grid vh;
  RasterChip sar;    // dual-pol composition of vv/vh (raw range)
  RasterChip eo;     // RGB, unit range
  RasterChip map;    // RGB, unit range; shifted when misaligned
  RasterChip ir;     // 1 channel, unit range
  std::vector<LandCover> classes;  // size x size, row-major (aligned)
  double lat = 0.0;
  double lon = 0.0;
  int shift_x = 0;  // applied map translation
  int shift_y = 0;
};

SyntheticScene generate_scene(const SceneSpec& spec);

/// Renders the map layer for a class raster translated by (dx, dy); pixels
/// that enter from outside the scene get the background color.
RasterChip render_map(const std::vector<LandCover>& classes, int size, int dx, int dy);

struct CorpusOptions {
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
  int chip_size = 0;  // 0 = one chip per scene
  std::string dataset_name = "synthetic";
};

/// Writes n_scenes scenes (seeds derived from template.seed) through the
/// ingest pipeline into out_dir and returns the manifest.
Manifest generate_corpus(int n_scenes, const SceneSpec& scene_template,
                         const std::filesystem::path& out_dir, const CorpusOptions& options = {},
                         IngestSummary* summary = nullptr);

/// Scene record as ingest sees it (exposed for tests that inject nodata or
/// dark EO).
SceneRecord scene_record(const SyntheticScene& scene, const std::string& source_id,
                         double ground_resolution);

}  // namespace s2e
