#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "s2e/synthgen.hpp"
#include "s2e/train.hpp"
#include "test_util.hpp"

using namespace s2e;
using namespace s2e::testing;

namespace {

SceneSpec spec_of(std::uint64_t seed, int size = 96) {
  SceneSpec s;
  s.seed = seed;
  s.size = size;
  return s;
}

std::vector<float> pixel(const RasterChip& c, int y, int x) {
  std::vector<float> v;
  for (int ch = 0; ch < c.channels(); ++ch) v.push_back(c.at(ch, y, x));
  return v;
}

// Largest absolute difference to the right and lower neighbours, max over channels.
std::vector<double> edge_strength(const RasterChip& c) {
  const int h = c.height(), w = c.width();
  std::vector<double> e(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      double m = 0.0;
      for (int ch = 0; ch < c.channels(); ++ch) {
        m = std::max({m, std::abs(double(c.at(ch, y, x)) - c.at(ch, y, x + 1)),
                      std::abs(double(c.at(ch, y, x)) - c.at(ch, y + 1, x))});
      }
      e[static_cast<std::size_t>(y) * w + x] = m;
    }
  }
  return e;
}

// Binary edge map holding the `count` strongest responses.
std::vector<int> top_edges(const std::vector<double>& strength, std::size_t count) {
  std::vector<std::size_t> idx(strength.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });
  std::vector<int> out(strength.size(), 0);
  for (std::size_t i = 0; i < count && i < idx.size(); ++i) out[idx[i]] = 1;
  return out;
}

double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  double joint[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < a.size(); ++i) joint[a[i]][b[i]] += 1.0;
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double p = joint[i][j] / n;
      const double pa = (joint[i][0] + joint[i][1]) / n;
      const double pb = (joint[0][j] + joint[1][j]) / n;
      if (p > 0) mi += p * std::log(p / (pa * pb));
    }
  }
  return mi;
}

std::map<std::string, std::string> tree_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& f : std::filesystem::recursive_directory_iterator(root)) {
    if (!f.is_regular_file()) continue;
    std::ifstream in(f.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[std::filesystem::relative(f.path(), root).string()] = s.str();
  }
  return out;
}

}  // namespace

TEST(Scene, SameSpecIsBitIdentical) {
  const auto a = generate_scene(spec_of(7));
  const auto b = generate_scene(spec_of(7));
  EXPECT_TRUE(a.sar.same_pixels(b.sar));
  EXPECT_TRUE(a.eo.same_pixels(b.eo));
  EXPECT_TRUE(a.map.same_pixels(b.map));
  EXPECT_TRUE(a.ir.same_pixels(b.ir));
  EXPECT_EQ(a.lat, b.lat);
  EXPECT_EQ(a.lon, b.lon);
  EXPECT_EQ(a.classes, b.classes);
  const auto c = generate_scene(spec_of(8));
  EXPECT_FALSE(a.eo.same_pixels(c.eo));
}

TEST(Scene, ChipRangesAndShapes) {
  const auto s = generate_scene(spec_of(3, 64));
  EXPECT_EQ(s.sar.channels(), 3);
  EXPECT_EQ(s.eo.channels(), 3);
  EXPECT_EQ(s.map.channels(), 3);
  EXPECT_EQ(s.ir.channels(), 1);
  EXPECT_EQ(s.eo.value_range(), ValueRange::unit);
  EXPECT_EQ(s.map.value_range(), ValueRange::unit);
  EXPECT_EQ(s.classes.size(), 64u * 64u);
  EXPECT_GE(s.lat, -60.0);
  EXPECT_LE(s.lat, 60.0);
}

TEST(Scene, NoSpeckleMakesSarAFunctionOfClass) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = spec_of(seed);
    spec.speckle_strength = 0.0;
    const auto s = generate_scene(spec);
    std::map<LandCover, std::set<std::pair<float, float>>> seen;
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
      seen[s.classes[i]].insert({s.vv.values[i], s.vh.values[i]});
    }
    for (const auto& [cls, values] : seen) EXPECT_EQ(values.size(), 1u) << int(cls);
  }
  auto noisy = spec_of(1);
  noisy.speckle_strength = 0.5;
  const auto s = generate_scene(noisy);
  std::set<float> veg;
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    if (s.classes[i] == LandCover::vegetation) veg.insert(s.vv.values[i]);
  }
  EXPECT_GT(veg.size(), 100u);
}

// Road and water (and field and vegetation) look the same to SAR but not
// to the EO camera or the map.
TEST(Scene, SarAmbiguousPairsAreSeparableInEoAndMap) {
  auto spec = spec_of(0, 128);
  spec.speckle_strength = 0.0;
  spec.n_shapes = 40;
  std::map<LandCover, std::size_t> first;
  for (std::uint64_t seed = 0; seed < 20 && first.size() < 5; ++seed) {
    spec.seed = seed;
    const auto s = generate_scene(spec);
    for (std::size_t i = 0; i < s.classes.size(); ++i) first.try_emplace(s.classes[i], i);
    if (first.size() < 5) {
      first.clear();
      continue;
    }
    const int n = spec.size;
    auto at = [&](const RasterChip& c, LandCover k) {
      const std::size_t i = first.at(k);
      return pixel(c, static_cast<int>(i) / n, static_cast<int>(i) % n);
    };
    for (auto [a, b] : {std::pair{LandCover::road, LandCover::water},
                        std::pair{LandCover::field, LandCover::vegetation}}) {
      EXPECT_EQ(at(s.sar, a), at(s.sar, b));
      EXPECT_EQ(at(s.map, a) == at(s.map, b), false);
      double eo_diff = 0.0;
      const auto ea = at(s.eo, a), eb = at(s.eo, b);
      for (int c = 0; c < 3; ++c) eo_diff += std::abs(ea[c] - eb[c]);
      EXPECT_GT(eo_diff, 0.15);
    }
  }
  EXPECT_EQ(first.size(), 5u);
}

TEST(Scene, MisalignmentShiftsOnlyTheMap) {
  for (std::uint64_t seed : {11, 12, 13, 14, 15, 16}) {
    auto spec = spec_of(seed);
    const auto aligned = generate_scene(spec);
    spec.misalignment = 8;
    const auto shifted = generate_scene(spec);
    EXPECT_EQ(std::abs(shifted.shift_x) + std::abs(shifted.shift_y), 8);
    EXPECT_TRUE(shifted.sar.same_pixels(aligned.sar));
    EXPECT_TRUE(shifted.eo.same_pixels(aligned.eo));
    EXPECT_EQ(shifted.classes, aligned.classes);
    // Explicit translation of the aligned map by (dx, dy).
    const int n = spec.size, dx = shifted.shift_x, dy = shifted.shift_y;
    int compared = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const int sy = y - dy, sx = x - dx;
        if (sy < 0 || sy >= n || sx < 0 || sx >= n) continue;
        ASSERT_EQ(pixel(shifted.map, y, x), pixel(aligned.map, sy, sx));
        ++compared;
      }
    }
    EXPECT_EQ(compared, n * (n - 8));
    EXPECT_TRUE(shifted.map.same_pixels(render_map(aligned.classes, n, dx, dy)));
  }
}

TEST(Scene, SpecValidation) {
  EXPECT_EQ(kind_of([] { generate_scene(spec_of(1, 63)); }), ErrorKind::config);
  auto s = spec_of(1);
  s.misalignment = -1;
  EXPECT_EQ(kind_of([&] { generate_scene(s); }), ErrorKind::config);
  s = spec_of(1);
  s.speckle_strength = -0.1;
  EXPECT_EQ(kind_of([&] { generate_scene(s); }), ErrorKind::config);
}

// The map carries more information about EO edges than SAR does.
TEST(Scene, MapEdgesInformEoMoreThanSar) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = generate_scene(spec_of(100 + seed, 128));
    const auto eo_strength = edge_strength(s.eo);
    std::vector<int> eo_edges(eo_strength.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < eo_strength.size(); ++i) {
      eo_edges[i] = eo_strength[i] > 0.1;
      count += eo_edges[i];
    }
    ASSERT_GT(count, 0u);
    // Same edge budget for both sources.
    const double mi_map = mutual_information(top_edges(edge_strength(s.map), count), eo_edges);
    const double mi_sar = mutual_information(top_edges(edge_strength(s.sar), count), eo_edges);
    EXPECT_GT(mi_map, mi_sar) << "seed " << seed;
  }
}

TEST(Corpus, CountsSplitAndDeterminism) {
  TempDir a("synth_a"), b("synth_b");
  SceneSpec spec = spec_of(7, 64);
  IngestSummary summary;
  const auto m = generate_corpus(10, spec, a.path(), CorpusOptions{}, &summary);
  std::set<std::string> sources;
  for (const auto& e : m.samples) sources.insert(e.source_id);
  EXPECT_EQ(sources.size(), 10u);
  EXPECT_EQ(m.count(Split::train), 8u);
  EXPECT_EQ(m.count(Split::test), 2u);
  EXPECT_NO_THROW(m.validate());

  generate_corpus(10, spec, b.path());
  EXPECT_EQ(tree_bytes(a.path()), tree_bytes(b.path()));

  for (const char* cond : {"sar", "sar+map", "sar+ir", "sar+latlon", "sar+map+ir"}) {
    const auto c = parse_conditioning(cond);
    const auto data = load_split(m, Split::train, c);
    ASSERT_EQ(data.size(), 8u) << cond;
    EXPECT_EQ(data.inputs[0].c(), 3 + conditioning_channels(c)) << cond;
    EXPECT_EQ(data.targets[0].c(), 3);
  }
  EXPECT_EQ(kind_of([&] { generate_corpus(0, spec, b.path()); }), ErrorKind::config);
}

TEST(Corpus, ChippedScenes) {
  TempDir out("synth_chips");
  CorpusOptions opts;
  opts.chip_size = 64;
  const auto m = generate_corpus(3, spec_of(9, 128), out.path(), opts);
  EXPECT_EQ(m.samples.size(), 12u);
  const auto s = load_sample(m, m.samples[0], {ModalityKind::map_rgb});
  EXPECT_EQ(s.sar.height(), 64);
  EXPECT_EQ(s.target_eo.value_range(), ValueRange::unit_signed);
}
