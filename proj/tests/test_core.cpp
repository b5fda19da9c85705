#include <gtest/gtest.h>

#include <map>

#include <fstream>

#include "s2e/chip_io.hpp"
#include "s2e/core.hpp"
#include "s2e/image_io.hpp"
#include "s2e/manifest.hpp"
#include "test_util.hpp"

using namespace s2e;
using s2e::testing::kind_of;
using s2e::testing::TempDir;

namespace {

RasterChip ramp(int c, int h, int w, float offset = 0.f) {
  std::vector<float> v(static_cast<std::size_t>(c) * h * w);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.01f * i + offset) * 0.9f;
  return RasterChip(c, h, w, std::move(v), ValueRange::unit_signed);
}

}  // namespace

TEST(RasterChip, RejectsOutOfRangeValues) {
  EXPECT_EQ(kind_of([] { RasterChip(1, 2, 2, {0.f, 0.5f, 1.5f, 0.f}, ValueRange::unit_signed); }),
            ErrorKind::range);
  EXPECT_EQ(kind_of([] { RasterChip(1, 2, 2, {0.f, 0.5f, -0.1f, 0.f}, ValueRange::unit); }),
            ErrorKind::range);
  EXPECT_NO_THROW(RasterChip(1, 2, 2, {-50.f, 7.f, 1e6f, 0.f}, ValueRange::raw));
}

TEST(RasterChip, RejectsBadMaskAndGeo) {
  EXPECT_EQ(kind_of([] {
              RasterChip(1, 2, 2, std::vector<float>(4), ValueRange::unit, std::nullopt,
                         std::vector<std::uint8_t>(3));
            }),
            ErrorKind::dimension);
  EXPECT_EQ(kind_of([] {
              RasterChip(1, 2, 2, std::vector<float>(4), ValueRange::unit, GeoInfo{91, 0, 1});
            }),
            ErrorKind::validation);
}

TEST(ModalityTable, ChannelCounts) {
  EXPECT_EQ(channel_count(ModalityKind::sar_dual_pol), 3);
  EXPECT_EQ(channel_count(ModalityKind::sar_quad_pol), 4);
  EXPECT_EQ(channel_count(ModalityKind::eo_rgb), 3);
  EXPECT_EQ(channel_count(ModalityKind::map_rgb), 3);
  EXPECT_EQ(channel_count(ModalityKind::ir_single), 1);
  EXPECT_EQ(channel_count(ModalityKind::latlon_planes), 2);
}

TEST(Conditioning, ParseAndPrint) {
  EXPECT_TRUE(parse_conditioning("sar").empty());
  const auto c = parse_conditioning("sar+map+ir+latlon");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(conditioning_to_string(c), "sar+map+ir+latlon");
  EXPECT_EQ(conditioning_channels(c), 6);
  EXPECT_EQ(kind_of([] { parse_conditioning("map"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_conditioning("sar+map+map"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_conditioning("sar+foo"); }), ErrorKind::config);
}

TEST(ConcatConditioning, ChannelArithmeticAndOrder) {
  const auto sar = ramp(3, 256, 256);
  const auto map = ramp(3, 256, 256, 1.f);
  const RasterChip joint = concat_conditioning(sar, std::vector<RasterChip>{map});
  EXPECT_EQ(joint.channels(), 6);
  for (int c = 0; c < 3; ++c) {
    EXPECT_TRUE(std::equal(sar.channel(c).begin(), sar.channel(c).end(), joint.channel(c).begin()));
    EXPECT_TRUE(std::equal(map.channel(c).begin(), map.channel(c).end(), joint.channel(c + 3).begin()));
  }
  const RasterChip alone = concat_conditioning(sar, {});
  EXPECT_TRUE(alone.same_pixels(sar));

  const auto quad = ramp(4, 256, 256);
  const auto ir = ramp(1, 256, 256, 2.f);
  const auto ll = latlon_to_planes(10, 20, 256, 256);
  EXPECT_EQ(concat_conditioning(quad, std::vector<RasterChip>{ir, ll}).channels(), 7);
}

TEST(ConcatConditioning, Associative) {
  const auto a = ramp(3, 16, 16), b = ramp(3, 16, 16, 1.f), c = ramp(1, 16, 16, 2.f);
  const auto ab = concat_conditioning(a, std::vector<RasterChip>{b});
  const auto left = concat_conditioning(ab, std::vector<RasterChip>{c});
  const auto right = concat_conditioning(a, std::vector<RasterChip>{b, c});
  EXPECT_TRUE(left.same_pixels(right));
}

TEST(ConcatConditioning, Errors) {
  const auto a = ramp(3, 16, 16);
  EXPECT_EQ(kind_of([&] { concat_conditioning(a, std::vector<RasterChip>{ramp(3, 8, 8)}); }),
            ErrorKind::dimension);
  const auto unit = RasterChip::filled(3, 16, 16, 0.5f, ValueRange::unit);
  EXPECT_EQ(kind_of([&] { concat_conditioning(a, std::vector<RasterChip>{unit}); }),
            ErrorKind::range);
}

TEST(LatLonPlanes, Values) {
  const auto p = latlon_to_planes(45.0, -90.0, 256, 256);
  EXPECT_EQ(p.channels(), 2);
  for (float v : p.channel(0)) ASSERT_EQ(v, 0.5f);
  for (float v : p.channel(1)) ASSERT_EQ(v, -0.5f);
  const auto zero = latlon_to_planes(0, 0, 4, 4);
  for (float v : zero.data()) ASSERT_EQ(v, 0.f);
  const auto corner = latlon_to_planes(90, 180, 2, 2);
  for (float v : corner.data()) ASSERT_EQ(v, 1.f);
  EXPECT_EQ(kind_of([] { latlon_to_planes(91, 0, 2, 2); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { latlon_to_planes(0, -181, 2, 2); }), ErrorKind::validation);
}

TEST(LatLonPlanes, ConstantForRandomInputs) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto p = latlon_to_planes(rng.uniform(-90, 90), rng.uniform(-180, 180), 5, 7);
    for (int c = 0; c < 2; ++c) {
      const auto ch = p.channel(c);
      for (float v : ch) ASSERT_EQ(v, ch[0]);
    }
  }
}

TEST(Sample, ValidateChecksExtent) {
  Sample s;
  s.id = "x";
  s.sar = ramp(3, 16, 16);
  s.target_eo = ramp(3, 16, 16);
  s.conditions.emplace_back(Modality{ModalityKind::map_rgb}, ramp(3, 8, 8));
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::dimension);
}

TEST(ChipIo, RoundTripIsBitExact) {
  TempDir dir("chipio");
  std::vector<std::uint8_t> mask(64 * 48, 0);
  mask[5] = 1;
  const RasterChip base = ramp(3, 64, 48);
  const RasterChip chip(3, 64, 48, std::vector<float>(base.data().begin(), base.data().end()),
                        ValueRange::unit_signed, GeoInfo{12.5, -33.25, 10.0}, mask);
  write_chip(dir / "a.chip", chip, ModalityKind::sar_dual_pol);
  const RasterChip back = read_chip(dir / "a.chip");
  EXPECT_TRUE(back.same_pixels(chip));
  EXPECT_EQ(back.value_range(), chip.value_range());
  EXPECT_EQ(back.geo(), chip.geo());
  EXPECT_EQ(back.nodata_mask(), chip.nodata_mask());
  EXPECT_TRUE(std::filesystem::exists(sidecar_path(dir / "a.chip")));
}

TEST(ChipIo, BadMagicIsRejected) {
  TempDir dir("chipio_bad");
  std::ofstream(dir / "bad.chip", std::ios::binary) << "NOTACHIP-and-more-bytes";
  EXPECT_NE(kind_of([&] { read_chip(dir / "bad.chip"); }), ErrorKind::config);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir("png");
  Rgb8Image img(7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  write_png(dir / "x.png", img);
  EXPECT_EQ(read_png(dir / "x.png"), img);
}

TEST(ImageIo, TiffRoundTrip) {
  TempDir dir("tiff");
  Grid g(9, 11);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = 0.25f * static_cast<float>(i) - 3.f;
  write_tiff_band(dir / "b.tif", g);
  const Grid back = read_band(dir / "b.tif");
  EXPECT_EQ(back.values, g.values);
  EXPECT_EQ(back.height, 9);
}

TEST(Manifest, SerializeRoundTrip) {
  Manifest m;
  m.dataset_name = "demo";
  m.seed = 9;
  m.split_ratio = 0.8;
  m.sar_bounds = {{0.f, 1.f}, {0.f, 0.5f}, {0.f, 10.f}};
  m.samples.push_back({"a_r0_c0", "a", Split::train, {"a.sar.chip", "a.eo.chip", "a.map.chip", ""}, 1.5, 2.5});
  m.samples.push_back({"b_r0_c0", "b", Split::test, {"b.sar.chip", "b.eo.chip", "", ""}, -1.0, 3.0});
  const std::string text = serialize_manifest(m);
  const Manifest back = parse_manifest(text, "/tmp");
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize_manifest(back), text);
}

TEST(Manifest, ValidateRejectsLeakingSource) {
  Manifest m;
  m.samples.push_back({"a1", "a", Split::train, {}, 0, 0});
  m.samples.push_back({"a2", "a", Split::test, {}, 0, 0});
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::validation);
}

TEST(Manifest, SplitBySourceIsReproducibleAndNearRatio) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::size_t total = 0;
    Rng rng(seed);
    for (int i = 0; i < 25; ++i) {
      counts.emplace_back("scene" + std::to_string(i), 9);
      total += 9;
    }
    const auto train = assign_train_sources(counts, 0.8, seed);
    EXPECT_EQ(train, assign_train_sources(counts, 0.8, seed));
    const double n_train = 9.0 * static_cast<double>(train.size());
    // Whole scenes of 9 samples: the closest achievable count.
    EXPECT_LE(std::abs(n_train - 0.8 * total), 4.5);
  }
  std::vector<std::pair<std::string, std::size_t>> ten;
  for (int i = 0; i < 10; ++i) ten.emplace_back("s" + std::to_string(i), 1);
  EXPECT_EQ(assign_train_sources(ten, 0.8, 3).size(), 8u);
}

TEST(Manifest, UnevenSourcesStillSplitWithinOneSample) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::map<std::string, std::size_t> size_of;
    std::size_t total = 0;
    for (int i = 0; i < 25; ++i) {
      const std::size_t c = i < 3 ? 1 : 2 + rng.below(7);
      counts.emplace_back("src" + std::to_string(i), c);
      size_of[counts.back().first] = c;
      total += c;
    }
    const auto train = assign_train_sources(counts, 0.8, seed);
    EXPECT_EQ(train, assign_train_sources(counts, 0.8, seed));
    std::size_t n_train = 0;
    for (const auto& id : train) n_train += size_of.at(id);
    EXPECT_LE(std::abs(static_cast<double>(n_train) - 0.8 * total), 1.0 + 1e-9) << seed;
    EXPECT_GT(train.size(), 0u);
    EXPECT_LT(train.size(), counts.size());
  }
}
