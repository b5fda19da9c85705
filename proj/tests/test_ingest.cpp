#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "s2e/chip_io.hpp"
#include "s2e/ingest.hpp"
#include "pipeline_fixtures.hpp"
#include "test_util.hpp"

using namespace s2e;
using namespace s2e::testing;

namespace {

RasterChip rgb(float r, float g, float b, int size = 8) {
  std::vector<float> v;
  for (float c : {r, g, b}) v.insert(v.end(), static_cast<std::size_t>(size) * size, c);
  return RasterChip(3, size, size, std::move(v), ValueRange::unit);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ComposeDualPol, RatioChannel) {
  const auto c = compose_dual_pol(Grid(4, 4, 0.5f), Grid(4, 4, 0.25f));
  for (float v : c.channel(2)) EXPECT_NEAR(v, 0.5 / (0.25 + 1e-6), 1e-5);
  for (float v : c.channel(0)) EXPECT_EQ(v, 0.5f);
  for (float v : c.channel(1)) EXPECT_EQ(v, 0.25f);

  const auto zero = compose_dual_pol(Grid(4, 4, 0.f), Grid(4, 4, 0.f));
  for (float v : zero.channel(2)) EXPECT_EQ(v, 0.f);

  const auto same = compose_dual_pol(Grid(4, 4, 0.3f), Grid(4, 4, 0.3f));
  for (float v : same.channel(2)) EXPECT_NEAR(v, 0.3 / (0.3 + 1e-6), 1e-6);
}

TEST(ComposeDualPol, ClipsAndStaysFinite) {
  Grid vv(1, 5), vh(1, 5);
  vv.values = {1e30f, -1e30f, 0.f, 5.f, -3.f};
  vh.values = {0.f, 0.f, 1e-30f, -0.f, 1e30f};
  const auto c = compose_dual_pol(vv, vh);
  for (float v : c.data()) EXPECT_TRUE(std::isfinite(v));
  for (float v : c.channel(2)) EXPECT_LE(v, 10.f);
}

TEST(ComposeDualPol, ShapeMismatch) {
  EXPECT_EQ(kind_of([] { compose_dual_pol(Grid(4, 4), Grid(4, 5)); }), ErrorKind::dimension);
}

TEST(ComposeQuadPol, OrderAndPermutation) {
  const auto c = compose_quad_pol(Grid(2, 2, 1.f), Grid(2, 2, 2.f), Grid(2, 2, 3.f), Grid(2, 2, 4.f));
  for (int ch = 0; ch < 4; ++ch) EXPECT_EQ(c.channel(ch)[0], static_cast<float>(ch + 1));
  const auto p = compose_quad_pol(Grid(2, 2, 4.f), Grid(2, 2, 3.f), Grid(2, 2, 2.f), Grid(2, 2, 1.f));
  for (int ch = 0; ch < 4; ++ch) EXPECT_EQ(p.channel(ch)[0], static_cast<float>(4 - ch));
  const auto z = compose_quad_pol(Grid(2, 2), Grid(2, 2), Grid(2, 2), Grid(2, 2));
  for (float v : z.data()) EXPECT_EQ(v, 0.f);
  EXPECT_EQ(kind_of([] { compose_quad_pol(Grid(2, 2), Grid(2, 3), Grid(2, 2), Grid(2, 2)); }),
            ErrorKind::dimension);
}

TEST(CloudFilter, Cases) {
  EXPECT_FALSE(cloud_filter(rgb(0, 0, 0), 0.2));
  EXPECT_TRUE(cloud_filter(rgb(1, 1, 1), 0.2));
  EXPECT_NEAR(mean_hsv_value(rgb(0.3f, 0.1f, 0.05f)), 0.3, 1e-7);
  EXPECT_TRUE(cloud_filter(rgb(0.3f, 0.1f, 0.05f), 0.2));
  EXPECT_FALSE(cloud_filter(rgb(0.125f, 0.1f, 0.05f), 0.125));  // must exceed
  const auto one = RasterChip::filled(1, 4, 4, 0.5f, ValueRange::unit);
  EXPECT_EQ(kind_of([&] { cloud_filter(one, 0.2); }), ErrorKind::modality);
}

TEST(CloudFilter, BrighteningNeverRejects) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> v(3 * 16);
    for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 0.5));
    const RasterChip img(3, 4, 4, v, ValueRange::unit);
    if (!cloud_filter(img, 0.2)) continue;
    const double k = rng.uniform(1.0, 4.0);
    for (auto& x : v) x = static_cast<float>(std::min(1.0, x * k));
    EXPECT_TRUE(cloud_filter(RasterChip(3, 4, 4, v, ValueRange::unit), 0.2));
  }
}

TEST(ChipScene, NineFrom900) {
  const auto r = make_record("s", 900, 1);
  const auto res = chip_scene(r.sar_raw, IngestConfig{});
  EXPECT_EQ(res.chips.size(), 9u);
  EXPECT_EQ(res.windows.back(), (ChipWindow{512, 512}));
}

TEST(ChipScene, IdentityAt256) {
  const auto r = make_record("s", 256, 2);
  const auto res = chip_scene(r.sar_raw, IngestConfig{});
  ASSERT_EQ(res.chips.size(), 1u);
  EXPECT_TRUE(res.chips[0].same_pixels(r.sar_raw));
}

TEST(ChipScene, OcclusionThreshold) {
  const int eleven = static_cast<int>(0.11 * 256 * 256);
  const int nine = static_cast<int>(0.09 * 256 * 256);
  const auto r = make_record("s", 512, 3, 0.5f, {{0, 0, eleven}, {0, 256, nine}});
  const auto res = chip_scene(r.sar_raw, IngestConfig{});
  EXPECT_EQ(res.chips.size(), 3u);
  EXPECT_EQ(res.dropped_occluded, 1u);
  EXPECT_EQ(res.windows.front(), (ChipWindow{0, 256}));
}

TEST(ChipScene, Undersized) {
  const auto r = make_record("s", 200, 4);
  const auto res = chip_scene(r.sar_raw, IngestConfig{});
  EXPECT_TRUE(res.chips.empty());
  EXPECT_TRUE(res.undersized);
}

TEST(ChipScene, ConservationWithoutResampling) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 64 + static_cast<int>(rng.below(200));
    const int w = 64 + static_cast<int>(rng.below(200));
    IngestConfig cfg;
    cfg.chip_size = 32 + static_cast<int>(rng.below(32));
    cfg.chip_stride = cfg.chip_size;
    std::vector<float> v(static_cast<std::size_t>(h) * w);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    const RasterChip scene(1, h, w, v, ValueRange::raw);
    const auto res = chip_scene(scene, cfg);
    ASSERT_EQ(res.chips.size(),
              static_cast<std::size_t>((h / cfg.chip_size) * (w / cfg.chip_size)));
    for (std::size_t k = 0; k < res.chips.size(); ++k) {
      const auto& win = res.windows[k];
      const auto& c = res.chips[k];
      for (int y = 0; y < cfg.chip_size; y += 7)
        for (int x = 0; x < cfg.chip_size; x += 5)
          ASSERT_EQ(c.at(0, y, x), scene.at(0, win.row + y, win.col + x));
    }
  }
}

TEST(Normalize, PercentileBoundsAndRange) {
  std::vector<float> v(101);
  for (int i = 0; i <= 100; ++i) v[i] = static_cast<float>(i);
  const RasterChip chip(1, 1, 101, v, ValueRange::raw);
  const auto bounds = compute_sar_bounds(std::span<const RasterChip>(&chip, 1), 1.0, 99.0);
  ASSERT_EQ(bounds.size(), 1u);
  EXPECT_FLOAT_EQ(bounds[0].lo, 1.f);
  EXPECT_FLOAT_EQ(bounds[0].hi, 99.f);
  const auto n = normalize_sar(chip, bounds);
  EXPECT_EQ(n.value_range(), ValueRange::unit_signed);
  EXPECT_FLOAT_EQ(n.at(0, 0, 0), -1.f);
  EXPECT_FLOAT_EQ(n.at(0, 0, 50), 0.f);
  EXPECT_FLOAT_EQ(n.at(0, 0, 100), 1.f);
}

TEST(BuildManifest, TenScenesSplitEightTwo) {
  TempDir dir("bm10");
  std::vector<SceneRecord> scenes;
  for (int i = 0; i < 10; ++i) scenes.push_back(make_record("scene" + std::to_string(i), 256, i));
  IngestSummary s;
  IngestConfig cfg;
  cfg.seed = 4;
  const Manifest m = build_manifest(scenes, cfg, dir.path(), "t", &s);
  EXPECT_EQ(s.train_samples, 8u);
  EXPECT_EQ(s.test_samples, 2u);
  EXPECT_NO_THROW(m.validate());
}

TEST(BuildManifest, CloudRejectedScenesVanish) {
  TempDir dir("bmcloud");
  std::vector<SceneRecord> scenes;
  for (int i = 0; i < 10; ++i) {
    scenes.push_back(make_record("scene" + std::to_string(i), 256, i, i < 3 ? 0.05f : 0.5f));
  }
  IngestSummary s;
  const Manifest m = build_manifest(scenes, IngestConfig{}, dir.path(), "t", &s);
  EXPECT_EQ(s.rejected_cloud, 3u);
  std::set<std::string> sources;
  for (const auto& e : m.samples) sources.insert(e.source_id);
  EXPECT_EQ(sources.size(), 7u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(sources.count("scene" + std::to_string(i)), 0u);
}

TEST(BuildManifest, ByteIdenticalAndOrderIndependent) {
  TempDir a("bm_a"), b("bm_b");
  std::vector<SceneRecord> scenes;
  for (int i = 0; i < 5; ++i) scenes.push_back(make_record("s" + std::to_string(i), 300, i));
  build_manifest(scenes, IngestConfig{}, a.path(), "t");
  std::reverse(scenes.begin(), scenes.end());
  build_manifest(scenes, IngestConfig{}, b.path(), "t");
  EXPECT_EQ(slurp(a / kManifestFileName), slurp(b / kManifestFileName));
  EXPECT_EQ(slurp(a / "chips/s3_r0_c0.sar.chip"), slurp(b / "chips/s3_r0_c0.sar.chip"));
}

TEST(BuildManifest, NothingSurvivesIsEmptyCorpus) {
  TempDir dir("bm_empty");
  std::vector<SceneRecord> scenes{make_record("dark", 256, 1, 0.0f)};
  EXPECT_EQ(kind_of([&] { build_manifest(scenes, IngestConfig{}, dir.path(), "t"); }),
            ErrorKind::empty_corpus);
}

TEST(BuildManifest, BoundsComeFromTrainSplitAndChipsAreUnitSigned) {
  TempDir dir("bm_bounds");
  std::vector<SceneRecord> scenes;
  for (int i = 0; i < 5; ++i) scenes.push_back(make_record("s" + std::to_string(i), 256, i));
  const Manifest m = build_manifest(scenes, IngestConfig{}, dir.path(), "t");
  EXPECT_EQ(m.sar_bounds.size(), 3u);
  for (const auto& e : m.samples) {
    const RasterChip sar = read_chip(dir.path() / e.paths.sar);
    EXPECT_EQ(sar.value_range(), ValueRange::unit_signed);
  }
}

TEST(SceneDirectory, ReadsTiffBands) {
  TempDir dir("scenes");
  for (int i = 0; i < 2; ++i) {
    const auto sd = dir / ("scene" + std::to_string(i));
    std::filesystem::create_directories(sd);
    Grid vv(256, 256, 0.2f), vh(256, 256, 0.05f), band(256, 256, 3000.f);
    write_tiff_band(sd / "vv.tif", vv);
    write_tiff_band(sd / "vh.tif", vh);
    for (const char* b : {"red", "green", "blue"}) write_tiff_band(sd / (std::string(b) + ".tif"), band);
    std::ofstream(sd / "scene.json") << R"({"lat": 48.1, "lon": 11.5, "ground_resolution": 10, "eo_scale": 10000})";
  }
  const auto scenes = load_scene_directory(dir.path(), dataset_preset("sen12ms"), IngestConfig{});
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(scenes[0].source_id, "scene0");
  EXPECT_NEAR(scenes[0].eo.at(0, 0, 0), 0.3f, 1e-6);
  EXPECT_EQ(scenes[0].sar_raw.channels(), 3);
  EXPECT_EQ(kind_of([] { dataset_preset("nope"); }), ErrorKind::config);
}
