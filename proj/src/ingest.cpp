#include "s2e/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "json.hpp"

#include "s2e/chip_io.hpp"
#include "s2e/error.hpp"

namespace s2e {

namespace {

constexpr double kMetersPerDegree = 111320.0;

void require_same_extent(const Grid& a, const Grid& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::dimension, std::string(what) + ": band extents differ (" +
                                   std::to_string(a.height) + "x" + std::to_string(a.width) +
                                   " vs " + std::to_string(b.height) + "x" +
                                   std::to_string(b.width) + ")");
  }
}

std::optional<std::vector<std::uint8_t>> nodata_mask(std::span<const Grid* const> bands,
                                                      std::optional<float> nodata) {
  if (!nodata) return std::nullopt;
  const std::size_t n = bands.front()->values.size();
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool all = true;
    for (const Grid* band : bands) {
      if (band->values[i] != *nodata) {
        all = false;
        break;
      }
    }
    mask[i] = all ? 1 : 0;
  }
  return mask;
}

double interpolated_percentile(std::vector<float>& values, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo_index = static_cast<std::size_t>(std::floor(pos));
  const auto hi_index = std::min(lo_index + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo_index),
                   values.end());
  const double lo = values[lo_index];
  double hi = lo;
  if (hi_index != lo_index) {
    hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo_index) + 1,
                           values.end());
  }
  return lo + (pos - static_cast<double>(lo_index)) * (hi - lo);
}

}  // namespace

void IngestConfig::validate() const {
  if (chip_size <= 0) fail(ErrorKind::config, "chip_size must be positive");
  if (chip_stride <= 0) fail(ErrorKind::config, "chip_stride must be positive");
  if (!(occlusion_max_fraction > 0.0 && occlusion_max_fraction < 1.0)) {
    fail(ErrorKind::config, "occlusion_max_fraction must be in (0,1)");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    fail(ErrorKind::config, "split_ratio must be in (0,1)");
  }
  if (!(ratio_epsilon > 0.0)) fail(ErrorKind::config, "ratio_epsilon must be positive");
  if (!(ratio_clip > 0.0)) fail(ErrorKind::config, "ratio_clip must be positive");
  if (!(percentile_lo >= 0.0 && percentile_lo < percentile_hi && percentile_hi <= 100.0)) {
    fail(ErrorKind::config, "percentiles must satisfy 0 <= lo < hi <= 100");
  }
}

RasterChip compose_dual_pol(const Grid& vv, const Grid& vh, const IngestConfig& cfg,
                            std::optional<float> nodata) {
  require_same_extent(vv, vh, "compose_dual_pol");
  const std::size_t n = vv.values.size();
  const Grid* bands[] = {&vv, &vh};
  auto mask = nodata_mask(bands, nodata);
  std::vector<float> data(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = vv.values[i];
    const double b = vh.values[i];
    data[i] = static_cast<float>(a);
    data[n + i] = static_cast<float>(b);
    double ratio = 0.0;
    if (!(mask && (*mask)[i])) {
      ratio = std::abs(a) / (std::abs(b) + cfg.ratio_epsilon);
      if (!std::isfinite(ratio) || ratio > cfg.ratio_clip) ratio = cfg.ratio_clip;
    }
    data[2 * n + i] = static_cast<float>(ratio);
  }
  return RasterChip(3, vv.height, vv.width, std::move(data), ValueRange::raw, std::nullopt,
                    std::move(mask));
}

RasterChip compose_quad_pol(const Grid& hh, const Grid& hv, const Grid& vh, const Grid& vv,
                            std::optional<float> nodata) {
  require_same_extent(hh, hv, "compose_quad_pol");
  require_same_extent(hh, vh, "compose_quad_pol");
  require_same_extent(hh, vv, "compose_quad_pol");
  const Grid* bands[] = {&hh, &hv, &vh, &vv};
  const std::size_t n = hh.values.size();
  std::vector<float> data(4 * n);
  for (std::size_t c = 0; c < 4; ++c) {
    std::copy(bands[c]->values.begin(), bands[c]->values.end(),
              data.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return RasterChip(4, hh.height, hh.width, std::move(data), ValueRange::raw, std::nullopt,
                    nodata_mask(bands, nodata));
}

double mean_hsv_value(const RasterChip& eo_rgb) {
  if (eo_rgb.channels() != 3) {
    fail(ErrorKind::modality, "cloud filter needs a 3-channel RGB chip, got " +
                                  std::to_string(eo_rgb.channels()) + " channels");
  }
  if (eo_rgb.value_range() != ValueRange::unit) {
    fail(ErrorKind::range, "cloud filter needs unit-range RGB");
  }
  const auto r = eo_rgb.channel(0);
  const auto g = eo_rgb.channel(1);
  const auto b = eo_rgb.channel(2);
  double sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) sum += std::max({r[i], g[i], b[i]});
  return sum / static_cast<double>(r.size());
}

bool cloud_filter(const RasterChip& eo_rgb, double threshold) {
  return mean_hsv_value(eo_rgb) > threshold;
}

std::vector<ChipWindow> chip_windows(int height, int width,
                                     const std::vector<std::uint8_t>* mask,
                                     const IngestConfig& cfg, std::size_t* dropped_occluded) {
  cfg.validate();
  std::vector<ChipWindow> out;
  if (height < cfg.chip_size || width < cfg.chip_size) return out;
  const double area = static_cast<double>(cfg.chip_size) * cfg.chip_size;
  for (int row = 0; row + cfg.chip_size <= height; row += cfg.chip_stride) {
    for (int col = 0; col + cfg.chip_size <= width; col += cfg.chip_stride) {
      if (mask) {
        std::size_t occluded = 0;
        for (int y = row; y < row + cfg.chip_size; ++y) {
          const auto* line = mask->data() + static_cast<std::size_t>(y) * width;
          for (int x = col; x < col + cfg.chip_size; ++x) occluded += line[x] ? 1 : 0;
        }
        if (static_cast<double>(occluded) / area > cfg.occlusion_max_fraction) {
          if (dropped_occluded) ++*dropped_occluded;
          continue;
        }
      }
      out.push_back({row, col});
    }
  }
  return out;
}

RasterChip crop_chip(const RasterChip& scene, ChipWindow window, int size) {
  if (window.row < 0 || window.col < 0 || window.row + size > scene.height() ||
      window.col + size > scene.width()) {
    fail(ErrorKind::dimension, "crop window outside scene");
  }
  std::vector<float> data(static_cast<std::size_t>(scene.channels()) * size * size);
  auto* dst = data.data();
  for (int c = 0; c < scene.channels(); ++c) {
    for (int y = 0; y < size; ++y) {
      const auto src = scene.channel(c).subspan(
          static_cast<std::size_t>(window.row + y) * scene.width() + window.col, size);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  std::optional<std::vector<std::uint8_t>> mask;
  if (scene.nodata_mask()) {
    mask.emplace(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      const auto* src = scene.nodata_mask()->data() +
                        static_cast<std::size_t>(window.row + y) * scene.width() + window.col;
      std::copy(src, src + size, mask->data() + static_cast<std::size_t>(y) * size);
    }
  }
  std::optional<GeoInfo> geo;
  if (scene.geo()) {
    GeoInfo g = *scene.geo();
    const double dx = (window.col + size / 2.0) - scene.width() / 2.0;
    const double dy = (window.row + size / 2.0) - scene.height() / 2.0;
    const double lat0 = g.center_lat;
    g.center_lat = std::clamp(lat0 - dy * g.ground_resolution / kMetersPerDegree, -90.0, 90.0);
    const double cos_lat = std::max(std::cos(lat0 * std::numbers::pi / 180.0), 1e-6);
    double lon = g.center_lon + dx * g.ground_resolution / (kMetersPerDegree * cos_lat);
    if (lon > 180.0) lon -= 360.0;
    if (lon < -180.0) lon += 360.0;
    g.center_lon = lon;
    geo = g;
  }
  return RasterChip(scene.channels(), size, size, std::move(data), scene.value_range(), geo,
                    std::move(mask));
}

ChipSceneResult chip_scene(const RasterChip& scene, const IngestConfig& cfg) {
  ChipSceneResult result;
  if (scene.height() < cfg.chip_size || scene.width() < cfg.chip_size) {
    result.undersized = true;
    return result;
  }
  const auto* mask = scene.nodata_mask() ? &*scene.nodata_mask() : nullptr;
  result.windows =
      chip_windows(scene.height(), scene.width(), mask, cfg, &result.dropped_occluded);
  for (const auto& w : result.windows) result.chips.push_back(crop_chip(scene, w, cfg.chip_size));
  return result;
}

std::vector<ChannelBounds> compute_sar_bounds(std::span<const RasterChip> chips,
                                              double percentile_lo, double percentile_hi) {
  if (chips.empty()) fail(ErrorKind::empty_corpus, "no chips to compute SAR bounds from");
  const int channels = chips.front().channels();
  // Cap the sample count; larger corpora are subsampled with a fixed stride.
  constexpr std::size_t kMaxValues = 8'000'000;
  std::size_t total = 0;
  for (const auto& chip : chips) total += chip.plane_size();
  const std::size_t stride = std::max<std::size_t>(1, total / kMaxValues);

  std::vector<ChannelBounds> bounds;
  for (int c = 0; c < channels; ++c) {
    std::vector<float> values;
    values.reserve(total / stride + 1);
    std::size_t counter = 0;
    for (const auto& chip : chips) {
      if (chip.channels() != channels) {
        fail(ErrorKind::dimension, "SAR chips differ in channel count");
      }
      const auto plane = chip.channel(c);
      const auto* mask = chip.nodata_mask() ? chip.nodata_mask()->data() : nullptr;
      for (std::size_t i = 0; i < plane.size(); ++i, ++counter) {
        if (counter % stride != 0) continue;
        if (mask && mask[i]) continue;
        if (std::isfinite(plane[i])) values.push_back(plane[i]);
      }
    }
    if (values.empty()) {
      bounds.push_back({0.0f, 0.0f});
      continue;
    }
    const double lo = interpolated_percentile(values, percentile_lo);
    const double hi = interpolated_percentile(values, percentile_hi);
    bounds.push_back({static_cast<float>(lo), static_cast<float>(hi)});
  }
  return bounds;
}

RasterChip normalize_sar(const RasterChip& raw, std::span<const ChannelBounds> bounds) {
  if (static_cast<int>(bounds.size()) != raw.channels()) {
    fail(ErrorKind::dimension, "SAR bounds channel count differs from chip");
  }
  std::vector<float> data(raw.data().size());
  const std::size_t n = raw.plane_size();
  for (int c = 0; c < raw.channels(); ++c) {
    const double lo = bounds[c].lo;
    const double hi = bounds[c].hi;
    const auto plane = raw.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      if (hi > lo) {
        v = (static_cast<double>(plane[i]) - lo) / (hi - lo) * 2.0 - 1.0;
        v = std::clamp(std::isfinite(v) ? v : 0.0, -1.0, 1.0);
      }
      data[c * n + i] = static_cast<float>(v);
    }
  }
  return RasterChip(raw.channels(), raw.height(), raw.width(), std::move(data),
                    ValueRange::unit_signed, raw.geo(), raw.nodata_mask());
}

RasterChip to_unit_signed(const RasterChip& unit_chip) {
  if (unit_chip.value_range() != ValueRange::unit) {
    fail(ErrorKind::range, "to_unit_signed expects a unit-range chip");
  }
  std::vector<float> data(unit_chip.data().begin(), unit_chip.data().end());
  for (auto& v : data) v = std::clamp(v * 2.0f - 1.0f, -1.0f, 1.0f);
  return RasterChip(unit_chip.channels(), unit_chip.height(), unit_chip.width(),
                    std::move(data), ValueRange::unit_signed, unit_chip.geo(),
                    unit_chip.nodata_mask());
}

Manifest build_manifest(std::span<const SceneRecord> scenes, const IngestConfig& cfg,
                        const std::filesystem::path& out_dir, const std::string& dataset_name,
                        IngestSummary* summary) {
  cfg.validate();
  IngestSummary stats;
  stats.scenes = scenes.size();

  std::vector<const SceneRecord*> ordered;
  for (const auto& s : scenes) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->source_id < b->source_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->source_id == ordered[i - 1]->source_id) {
      fail(ErrorKind::validation, "duplicate source_id '" + ordered[i]->source_id + "'");
    }
  }
  std::optional<ModalityKind> sar_kind;
  for (const auto* s : ordered) {
    if (sar_kind && *sar_kind != s->sar_kind) {
      fail(ErrorKind::modality, "scenes mix dual-pol and quad-pol SAR");
    }
    sar_kind = s->sar_kind;
  }

  struct PendingSample {
    std::string id;
    const SceneRecord* scene;
    RasterChip sar, eo;
    std::optional<RasterChip> map, ir;
  };
  std::vector<PendingSample> pending;
  std::vector<std::pair<std::string, std::size_t>> per_source;

  for (const auto* scene : ordered) {
    const auto& sar = scene->sar_raw;
    const auto check = [&](const RasterChip& chip, const char* what) {
      if (chip.height() != sar.height() || chip.width() != sar.width()) {
        fail(ErrorKind::dimension, "scene " + scene->source_id + ": " + what +
                                       " extent differs from SAR");
      }
    };
    check(scene->eo, "EO");
    if (scene->map) check(*scene->map, "map");
    if (scene->ir) check(*scene->ir, "IR");
    if (sar.channels() != channel_count(scene->sar_kind)) {
      fail(ErrorKind::modality, "scene " + scene->source_id + ": SAR channel count mismatch");
    }

    if (cfg.apply_cloud_filter && !cloud_filter(scene->eo, cfg.v_mean_threshold)) {
      ++stats.rejected_cloud;
      continue;
    }
    if (sar.height() < cfg.chip_size || sar.width() < cfg.chip_size) {
      ++stats.undersized;
      continue;
    }
    const auto* mask = sar.nodata_mask() ? &*sar.nodata_mask() : nullptr;
    const auto windows =
        chip_windows(sar.height(), sar.width(), mask, cfg, &stats.chips_occluded);
    const RasterChip sar_geo = sar.with_geo(scene->geo);
    for (const auto& w : windows) {
      PendingSample p;
      p.id = scene->source_id + "_r" + std::to_string(w.row) + "_c" + std::to_string(w.col);
      p.scene = scene;
      p.sar = crop_chip(sar_geo, w, cfg.chip_size);
      p.eo = crop_chip(scene->eo.with_geo(scene->geo), w, cfg.chip_size);
      if (scene->map) p.map = crop_chip(scene->map->with_geo(scene->geo), w, cfg.chip_size);
      if (scene->ir) p.ir = crop_chip(scene->ir->with_geo(scene->geo), w, cfg.chip_size);
      pending.push_back(std::move(p));
    }
    if (!windows.empty()) per_source.emplace_back(scene->source_id, windows.size());
  }
  if (pending.empty()) {
    fail(ErrorKind::empty_corpus, "no samples survived filtering and chipping (" +
                                      std::to_string(stats.scenes) + " scenes in)");
  }

  const auto train_sources = assign_train_sources(per_source, cfg.split_ratio, cfg.seed);

  std::vector<RasterChip> train_sar;
  for (const auto& p : pending) {
    if (train_sources.count(p.scene->source_id)) train_sar.push_back(p.sar);
  }
  Manifest manifest;
  manifest.dataset_name = dataset_name;
  manifest.seed = cfg.seed;
  manifest.split_ratio = cfg.split_ratio;
  manifest.sar_kind = *sar_kind;
  manifest.sar_bounds = compute_sar_bounds(train_sar, cfg.percentile_lo, cfg.percentile_hi);
  manifest.base_dir = out_dir;

  std::filesystem::create_directories(out_dir / "chips");
  for (const auto& p : pending) {
    ManifestEntry entry;
    entry.id = p.id;
    entry.source_id = p.scene->source_id;
    entry.split = train_sources.count(p.scene->source_id) ? Split::train : Split::test;
    const std::string stem = "chips/" + p.id;
    entry.paths.sar = stem + ".sar.chip";
    entry.paths.eo = stem + ".eo.chip";
    write_chip(out_dir / entry.paths.sar, normalize_sar(p.sar, manifest.sar_bounds),
               *sar_kind);
    write_chip(out_dir / entry.paths.eo, to_unit_signed(p.eo), ModalityKind::eo_rgb);
    if (p.map) {
      entry.paths.map = stem + ".map.chip";
      write_chip(out_dir / entry.paths.map, to_unit_signed(*p.map), ModalityKind::map_rgb);
    }
    if (p.ir) {
      entry.paths.ir = stem + ".ir.chip";
      write_chip(out_dir / entry.paths.ir, to_unit_signed(*p.ir), ModalityKind::ir_single);
    }
    entry.lat = p.sar.geo() ? p.sar.geo()->center_lat : 0.0;
    entry.lon = p.sar.geo() ? p.sar.geo()->center_lon : 0.0;
    (entry.split == Split::train ? stats.train_samples : stats.test_samples)++;
    manifest.samples.push_back(std::move(entry));
  }
  stats.samples = manifest.samples.size();
  write_manifest(manifest, out_dir / kManifestFileName);
  if (summary) *summary = stats;
  return manifest;
}

DatasetPreset dataset_preset(const std::string& name) {
  if (name == "sen12ms" || name == "dfc2020" || name == "generic" || name == "synthetic") {
    return {name, ModalityKind::sar_dual_pol, true};
  }
  if (name == "spacenet6") return {name, ModalityKind::sar_quad_pol, false};
  fail(ErrorKind::config, "unknown dataset '" + name +
                              "' (expected sen12ms, dfc2020, spacenet6, generic)");
}

namespace {

std::filesystem::path find_band(const std::filesystem::path& dir, const std::string& stem,
                                bool required) {
  for (const char* ext : {".tif", ".tiff", ".chip"}) {
    const auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  if (required) {
    fail(ErrorKind::io, "scene " + dir.filename().string() + " is missing band '" + stem + "'");
  }
  return {};
}

RasterChip unit_rgb(const Grid& r, const Grid& g, const Grid& b, double scale) {
  require_same_extent(r, g, "EO");
  require_same_extent(r, b, "EO");
  const std::size_t n = r.values.size();
  std::vector<float> data(3 * n);
  const Grid* bands[] = {&r, &g, &b};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = bands[c]->values[i] / scale;
      data[c * n + i] = static_cast<float>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0));
    }
  }
  return RasterChip(3, r.height, r.width, std::move(data), ValueRange::unit);
}

}  // namespace

std::vector<SceneRecord> load_scene_directory(const std::filesystem::path& input_dir,
                                              const DatasetPreset& preset,
                                              const IngestConfig& cfg) {
  if (!std::filesystem::is_directory(input_dir)) {
    fail(ErrorKind::io, "input directory not found: " + input_dir.string());
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(input_dir)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<SceneRecord> scenes;
  for (const auto& dir : dirs) {
    const auto meta_path = dir / "scene.json";
    if (!std::filesystem::exists(meta_path)) continue;
    nlohmann::json meta;
    try {
      std::ifstream in(meta_path);
      meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, "malformed " + meta_path.string() + ": " + e.what());
    }
    SceneRecord scene;
    scene.source_id = meta.value("source_id", dir.filename().string());
    scene.sar_kind = preset.sar_kind;
    scene.geo = GeoInfo{meta.at("lat").get<double>(), meta.at("lon").get<double>(),
                        meta.value("ground_resolution", 10.0)};
    std::optional<float> nodata;
    if (meta.contains("nodata") && !meta["nodata"].is_null()) nodata = meta["nodata"].get<float>();
    const double eo_scale = meta.value("eo_scale", 1.0);

    if (preset.sar_kind == ModalityKind::sar_dual_pol) {
      scene.sar_raw = compose_dual_pol(read_band(find_band(dir, "vv", true)),
                                       read_band(find_band(dir, "vh", true)), cfg, nodata);
    } else {
      scene.sar_raw = compose_quad_pol(read_band(find_band(dir, "hh", true)),
                                       read_band(find_band(dir, "hv", true)),
                                       read_band(find_band(dir, "vh", true)),
                                       read_band(find_band(dir, "vv", true)), nodata);
    }
    scene.eo = unit_rgb(read_band(find_band(dir, "red", true)),
                        read_band(find_band(dir, "green", true)),
                        read_band(find_band(dir, "blue", true)), eo_scale);
    if (const auto nir = find_band(dir, "nir", false); !nir.empty()) {
      const Grid g = read_band(nir);
      std::vector<float> data(g.values.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = g.values[i] / eo_scale;
        data[i] = static_cast<float>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0));
      }
      scene.ir = RasterChip(1, g.height, g.width, std::move(data), ValueRange::unit);
    }
    if (std::filesystem::exists(dir / "map.png")) {
      scene.map = image_to_chip(read_png(dir / "map.png"), ValueRange::unit);
    }
    scenes.push_back(std::move(scene));
  }
  if (scenes.empty()) {
    fail(ErrorKind::empty_corpus, "no scene directories with scene.json under " +
                                      input_dir.string());
  }
  return scenes;
}

}  // namespace s2e
