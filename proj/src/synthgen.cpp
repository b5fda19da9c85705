#include "s2e/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "s2e/error.hpp"
#include "s2e/rng.hpp"

namespace s2e {

namespace {

using Rgb = std::array<float, 3>;

constexpr std::uint64_t kGeometryStream = 0x67656f6dULL;   // "geom"
constexpr std::uint64_t kSpeckleStream = 0x737065636bULL;  // "speck"
constexpr std::uint64_t kTextureStream = 0x74657874ULL;    // "text"
constexpr std::uint64_t kShiftStream = 0x7368696674ULL;    // "shift"

Rgb eo_color(LandCover c) {
  switch (c) {
    case LandCover::vegetation: return {0.22f, 0.42f, 0.18f};
    case LandCover::building: return {0.72f, 0.70f, 0.68f};
    case LandCover::road: return {0.42f, 0.42f, 0.45f};
    case LandCover::water: return {0.08f, 0.18f, 0.42f};
    case LandCover::field: return {0.74f, 0.62f, 0.30f};
  }
  return {0, 0, 0};
}

Rgb map_color(LandCover c) {
  switch (c) {
    case LandCover::vegetation: return {0.93f, 0.93f, 0.90f};
    case LandCover::building: return {0.85f, 0.75f, 0.70f};
    case LandCover::road: return {1.00f, 1.00f, 1.00f};
    case LandCover::water: return {0.67f, 0.83f, 0.87f};
    case LandCover::field: return {0.80f, 0.90f, 0.70f};
  }
  return {0, 0, 0};
}

// Mean backscatter (VV, VH). Road and water coincide, field equals
// vegetation.
std::array<float, 2> sar_level(LandCover c) {
  switch (c) {
    case LandCover::vegetation:
    case LandCover::field: return {0.12f, 0.04f};
    case LandCover::building: return {0.90f, 0.30f};
    case LandCover::road:
    case LandCover::water: return {0.015f, 0.004f};
  }
  return {0, 0};
}

struct Canvas {
  int size;
  std::vector<LandCover> classes;
  std::vector<float> roof;  // per-pixel roof brightness offset for buildings

  explicit Canvas(int n)
      : size(n), classes(static_cast<std::size_t>(n) * n, LandCover::vegetation),
        roof(static_cast<std::size_t>(n) * n, 0.0f) {}

  void set(int y, int x, LandCover c, float roof_offset = 0.0f) {
    const auto i = static_cast<std::size_t>(y) * size + x;
    classes[i] = c;
    roof[i] = roof_offset;
  }
};

void draw_ellipse(Canvas& cv, double cy, double cx, double ry, double rx, double angle,
                  LandCover c) {
  const double r = std::max(ry, rx);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(cv.size - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(cv.size - 1, static_cast<int>(std::ceil(cx + r)));
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double u = (dx * ca + dy * sa) / rx;
      const double v = (-dx * sa + dy * ca) / ry;
      if (u * u + v * v <= 1.0) cv.set(y, x, c);
    }
  }
}

void draw_segment(Canvas& cv, double ay, double ax, double by, double bx, double half_width,
                  LandCover c) {
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half_width)));
  const int y1 = std::min(cv.size - 1, static_cast<int>(std::ceil(std::max(ay, by) + half_width)));
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half_width)));
  const int x1 = std::min(cv.size - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half_width)));
  const double vy = by - ay, vx = bx - ax;
  const double len2 = vy * vy + vx * vx;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double py = y + 0.5 - ay, px = x + 0.5 - ax;
      const double t = len2 > 0 ? std::clamp((py * vy + px * vx) / len2, 0.0, 1.0) : 0.0;
      const double dy = py - t * vy, dx = px - t * vx;
      if (dy * dy + dx * dx <= half_width * half_width) cv.set(y, x, c);
    }
  }
}

// Edge-to-edge polyline with one or two bends.
void draw_polyline(Canvas& cv, Rng& rng, double half_width, LandCover c) {
  const double n = cv.size;
  const bool horizontal = rng.below(2) == 0;
  const int bends = 1 + static_cast<int>(rng.below(2));
  std::vector<std::pair<double, double>> pts;  // (y, x)
  for (int i = 0; i <= bends + 1; ++i) {
    const double along = n * i / (bends + 1);
    const double across = rng.uniform(0.1 * n, 0.9 * n);
    pts.emplace_back(horizontal ? across : along, horizontal ? along : across);
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    draw_segment(cv, pts[i].first, pts[i].second, pts[i + 1].first, pts[i + 1].second,
                 half_width, c);
  }
}

// Smooth texture in roughly [-1, 1]: a few random plane waves.
std::vector<float> smooth_texture(int size, Rng& rng) {
  constexpr int kWaves = 4;
  std::array<double, kWaves> fy{}, fx{}, phase{};
  for (int k = 0; k < kWaves; ++k) {
    const double freq = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / size;
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    fy[k] = freq * std::sin(dir);
    fx[k] = freq * std::cos(dir);
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  std::vector<float> t(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWaves; ++k) s += std::sin(fy[k] * y + fx[k] * x + phase[k]);
      t[static_cast<std::size_t>(y) * size + x] = static_cast<float>(s / kWaves);
    }
  }
  return t;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

void SceneSpec::validate() const {
  if (size < 64) fail(ErrorKind::config, "scene size must be >= 64, got " + std::to_string(size));
  if (n_shapes < 0) fail(ErrorKind::config, "n_shapes must be >= 0");
  if (!(speckle_strength >= 0.0)) fail(ErrorKind::config, "speckle_strength must be >= 0");
  if (misalignment < 0 || misalignment >= size) {
    fail(ErrorKind::config, "misalignment must lie in [0, size)");
  }
  if (!(ground_resolution > 0.0)) fail(ErrorKind::config, "ground_resolution must be > 0");
}

RasterChip render_map(const std::vector<LandCover>& classes, int size, int dx, int dy) {
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<float> data(3 * plane);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int sy = y - dy, sx = x - dx;
      const LandCover c = (sy >= 0 && sy < size && sx >= 0 && sx < size)
                              ? classes[static_cast<std::size_t>(sy) * size + sx]
                              : LandCover::vegetation;
      const Rgb rgb = map_color(c);
      for (int ch = 0; ch < 3; ++ch) data[ch * plane + static_cast<std::size_t>(y) * size + x] = rgb[ch];
    }
  }
  return RasterChip(3, size, size, std::move(data), ValueRange::unit);
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int n = spec.size;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  Rng geo(derive_seed(spec.seed, kGeometryStream));

  SyntheticScene scene;
  scene.lat = geo.uniform(-60.0, 60.0);
  scene.lon = geo.uniform(-180.0, 180.0);

  Canvas cv(n);
  const int shapes = spec.n_shapes > 0 ? spec.n_shapes : 6 + n / 8;
  const double line_half = std::max(1.0, n / 48.0);
  // Area features first, then linear features, buildings on top.
  std::vector<int> kinds;
  for (int i = 0; i < shapes; ++i) {
    const double u = geo.uniform();
    kinds.push_back(u < 0.40 ? 0 : u < 0.58 ? 1 : u < 0.73 ? 2 : u < 0.88 ? 3 : 4);
  }
  std::stable_sort(kinds.begin(), kinds.end(), [](int a, int b) {
    auto rank = [](int k) { return k == 3 || k == 4 ? 0 : k == 1 || k == 2 ? 1 : 2; };
    return rank(a) < rank(b);
  });
  for (int kind : kinds) {
    switch (kind) {
      case 0: {  // building
        const int h = geo.range(std::max(3, n / 16), std::max(4, n / 6));
        const int w = geo.range(std::max(3, n / 16), std::max(4, n / 6));
        const int y0 = geo.range(0, n - h);
        const int x0 = geo.range(0, n - w);
        const auto offset = static_cast<float>(geo.uniform(-0.1, 0.1));
        for (int y = y0; y < y0 + h; ++y) {
          for (int x = x0; x < x0 + w; ++x) cv.set(y, x, LandCover::building, offset);
        }
        break;
      }
      case 1: draw_polyline(cv, geo, line_half, LandCover::road); break;
      case 2: draw_polyline(cv, geo, line_half * 1.5, LandCover::water); break;
      case 3:
        draw_ellipse(cv, geo.uniform(0, n), geo.uniform(0, n), geo.uniform(n / 10.0, n / 4.0),
                     geo.uniform(n / 10.0, n / 4.0), geo.uniform(0, std::numbers::pi),
                     LandCover::field);
        break;
      default:
        draw_ellipse(cv, geo.uniform(0, n), geo.uniform(0, n), geo.uniform(n / 12.0, n / 6.0),
                     geo.uniform(n / 12.0, n / 6.0), geo.uniform(0, std::numbers::pi),
                     LandCover::water);
        break;
    }
  }
  scene.classes = cv.classes;

  // EO: class colors with smooth texture and light pixel noise.
  Rng tex(derive_seed(spec.seed, kTextureStream));
  const auto texture = smooth_texture(n, tex);
  std::vector<float> eo(3 * plane), ir(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const LandCover c = cv.classes[i];
    const Rgb base = eo_color(c);
    const double amp = c == LandCover::vegetation ? 0.15 : c == LandCover::field ? 0.06 : 0.02;
    const double shade = 1.0 + amp * texture[i] + cv.roof[i];
    for (int ch = 0; ch < 3; ++ch) {
      eo[ch * plane + i] = clamp01(base[ch] * shade + tex.uniform(-0.02, 0.02));
    }
    ir[i] = clamp01(1.4 * eo[plane + i] + 0.05);
  }
  scene.eo = RasterChip(3, n, n, std::move(eo), ValueRange::unit);
  scene.ir = RasterChip(1, n, n, std::move(ir), ValueRange::unit);

  // SAR: class backscatter times multiplicative speckle. Each factor is
  // 1 + s * 4 * (mean of four uniforms - 1/2), clipped at zero.
  Rng speckle(derive_seed(spec.seed, kSpeckleStream));
  scene.vv = Grid(n, n);
  scene.vh = Grid(n, n);
  const auto factor = [&]() {
    if (spec.speckle_strength == 0.0) return 1.0;
    const double u = (speckle.uniform() + speckle.uniform() + speckle.uniform() + speckle.uniform()) / 4.0;
    return std::max(0.0, 1.0 + spec.speckle_strength * 4.0 * (u - 0.5));
  };
  for (std::size_t i = 0; i < plane; ++i) {
    const auto level = sar_level(cv.classes[i]);
    scene.vv.values[i] = static_cast<float>(level[0] * factor());
    scene.vh.values[i] = static_cast<float>(level[1] * factor());
  }
  scene.sar = compose_dual_pol(scene.vv, scene.vh);

  // Map: crisp class colors, optionally translated along one axis in a
  // seeded direction. The shift uses its own stream so SAR and EO do not
  // depend on it.
  if (spec.misalignment > 0) {
    Rng shift(derive_seed(spec.seed, kShiftStream));
    const int m = spec.misalignment;
    switch (shift.below(4)) {
      case 0: scene.shift_x = m; break;
      case 1: scene.shift_x = -m; break;
      case 2: scene.shift_y = m; break;
      default: scene.shift_y = -m; break;
    }
  }
  scene.map = render_map(cv.classes, n, scene.shift_x, scene.shift_y);
  return scene;
}

SceneRecord scene_record(const SyntheticScene& scene, const std::string& source_id,
                         double ground_resolution) {
  SceneRecord r;
  r.source_id = source_id;
  r.sar_kind = ModalityKind::sar_dual_pol;
  r.sar_raw = scene.sar;
  r.eo = scene.eo;
  r.map = scene.map;
  r.ir = scene.ir;
  r.geo = GeoInfo{scene.lat, scene.lon, ground_resolution};
  return r;
}

Manifest generate_corpus(int n_scenes, const SceneSpec& scene_template,
                         const std::filesystem::path& out_dir, const CorpusOptions& options,
                         IngestSummary* summary) {
  if (n_scenes < 1) fail(ErrorKind::config, "n_scenes must be >= 1");
  scene_template.validate();
  std::vector<SceneRecord> records;
  records.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    SceneSpec spec = scene_template;
    spec.seed = derive_seed(scene_template.seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    records.push_back(scene_record(generate_scene(spec), id, spec.ground_resolution));
  }
  IngestConfig cfg;
  cfg.chip_size = options.chip_size > 0 ? options.chip_size : scene_template.size;
  cfg.chip_stride = cfg.chip_size;
  cfg.split_ratio = options.split_ratio;
  cfg.seed = options.split_seed;
  cfg.apply_cloud_filter = true;
  return build_manifest(records, cfg, out_dir, options.dataset_name, summary);
}

}  // namespace s2e
