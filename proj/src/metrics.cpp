#include "s2e/metrics.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "s2e/error.hpp"
#include "s2e/rng.hpp"

namespace s2e {

namespace {

void require_same_shape(const RasterChip& a, const RasterChip& b, const char* what) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    fail(ErrorKind::dimension, std::string(what) + ": shape mismatch");
  }
  if (a.value_range() != b.value_range()) {
    fail(ErrorKind::range, std::string(what) + ": value ranges differ");
  }
}

double to_unit(float v, ValueRange range) {
  return range == ValueRange::unit_signed ? (static_cast<double>(v) + 1.0) * 0.5 : v;
}

std::array<double, kSsimWindow> gaussian_window() {
  constexpr double sigma = 1.5;
  std::array<double, kSsimWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable Gaussian filter keeping only fully covered positions.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::array<double, kSsimWindow>& g) {
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    const double* src = img.data() + static_cast<std::size_t>(y) * w;
    double* dst = rows.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * src[x + k];
      dst[x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * ow;
    for (int k = 0; k < kSsimWindow; ++k) {
      const double* src = rows.data() + static_cast<std::size_t>(y + k) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += g[k] * src[x];
    }
  }
  return out;
}

nn::Tensor<double> backbone_input(const RasterChip& chip) {
  if (chip.channels() != 3) fail(ErrorKind::dimension, "lpips expects 3-channel images");
  nn::Tensor<double> t(1, 3, chip.height(), chip.width());
  const auto data = chip.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    // Backbones take [-1, 1].
    t[i] = 2.0 * to_unit(data[i], chip.value_range()) - 1.0;
  }
  return t;
}

template <class V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::ifstream& in, const std::filesystem::path& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) {
    fail(ErrorKind::integrity, "truncated backbone weights: " + path.string());
  }
  return v;
}

constexpr char kBackboneMagic[8] = {'S', '2', 'E', 'L', 'P', 'I', 'P', '1'};

}  // namespace

double psnr(const RasterChip& a, const RasterChip& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0)) fail(ErrorKind::config, "psnr peak must be positive");
  const auto da = a.data();
  const auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sum += d * d;
  }
  const double mse = da.empty() ? 0.0 : sum / static_cast<double>(da.size());
  if (mse < peak * peak * 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const RasterChip& a, const RasterChip& b) {
  switch (a.value_range()) {
    case ValueRange::unit_signed: return psnr(a, b, 2.0);
    case ValueRange::unit: return psnr(a, b, 1.0);
    case ValueRange::raw: break;
  }
  fail(ErrorKind::range, "psnr on raw chips needs an explicit peak");
}

std::vector<std::vector<double>> ssim_map(const RasterChip& a, const RasterChip& b) {
  require_same_shape(a, b, "ssim");
  const int h = a.height();
  const int w = a.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    fail(ErrorKind::window, "ssim needs at least " + std::to_string(kSsimWindow) + "x" +
                                std::to_string(kSsimWindow) + " pixels, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t plane = a.plane_size();
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  std::vector<std::vector<double>> maps;
  for (int c = 0; c < a.channels(); ++c) {
    const auto ca = a.channel(c);
    const auto cb = b.channel(c);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = to_unit(ca[i], a.value_range());
      y[i] = to_unit(cb[i], b.value_range());
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g);
    const auto my = filter_valid(y, h, w, g);
    const auto mxx = filter_valid(xx, h, w, g);
    const auto myy = filter_valid(yy, h, w, g);
    const auto mxy = filter_valid(xy, h, w, g);
    std::vector<double> s(mx.size());
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      s[i] = ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    maps.push_back(std::move(s));
  }
  return maps;
}

double ssim(const RasterChip& a, const RasterChip& b) {
  const auto maps = ssim_map(a, b);
  double total = 0.0;
  for (const auto& m : maps) {
    double sum = 0.0;
    for (double v : m) sum += v;
    total += sum / static_cast<double>(m.size());
  }
  return total / static_cast<double>(maps.size());
}

ConvBackbone::ConvBackbone(std::vector<BackboneLayer> layers, std::string name)
    : layers_(std::move(layers)), name_(std::move(name)) {
  if (layers_.empty()) fail(ErrorKind::config, "backbone needs at least one layer");
  int expected_in = 3;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_channels != expected_in || l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0) {
      fail(ErrorKind::config, "backbone layer " + std::to_string(i) + " is malformed");
    }
    expected_in = l.out_channels;
    convs_.push_back(std::make_unique<nn::Conv2d<double>>("L" + std::to_string(i),
                                                          l.in_channels, l.out_channels,
                                                          l.kernel, l.stride, l.kernel / 2));
  }
}

std::vector<nn::Parameter<double>*> ConvBackbone::parameters() {
  std::vector<nn::Parameter<double>*> out;
  for (auto& c : convs_) c->collect_parameters(out);
  return out;
}

std::vector<nn::Tensor<double>> ConvBackbone::features(const nn::Tensor<double>& image) {
  std::vector<nn::Tensor<double>> out;
  nn::Context ctx;
  nn::Tensor<double> h = image;
  for (auto& conv : convs_) {
    h = conv->forward(h, ctx);
    for (auto& v : h.values()) v = std::max(v, 0.0);
    out.push_back(h);
  }
  return out;
}

void ConvBackbone::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(kBackboneMagic, sizeof(kBackboneMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    put<std::uint32_t>(out, l.in_channels);
    put<std::uint32_t>(out, l.out_channels);
    put<std::uint32_t>(out, l.kernel);
    put<std::uint32_t>(out, l.stride);
  }
  auto* self = const_cast<ConvBackbone*>(this);
  for (auto* p : self->parameters()) {
    for (double v : p->value.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

std::unique_ptr<ConvBackbone> ConvBackbone::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::config, "LPIPS weights file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kBackboneMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::integrity, "not a backbone weights file: " + path.string());
  }
  const auto n = get<std::uint32_t>(in, path);
  if (n == 0 || n > 64) fail(ErrorKind::integrity, "bad layer count in " + path.string());
  std::vector<BackboneLayer> layers(n);
  for (auto& l : layers) {
    l.in_channels = static_cast<int>(get<std::uint32_t>(in, path));
    l.out_channels = static_cast<int>(get<std::uint32_t>(in, path));
    l.kernel = static_cast<int>(get<std::uint32_t>(in, path));
    l.stride = static_cast<int>(get<std::uint32_t>(in, path));
  }
  auto net = std::make_unique<ConvBackbone>(std::move(layers), path.filename().string());
  for (auto* p : net->parameters()) {
    for (double& v : p->value.values()) v = get<float>(in, path);
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    fail(ErrorKind::integrity, "trailing bytes in " + path.string());
  }
  return net;
}

std::unique_ptr<ConvBackbone> make_test_backbone(std::uint64_t seed) {
  auto net = std::make_unique<ConvBackbone>(
      std::vector<BackboneLayer>{{3, 8, 3, 1}, {8, 16, 3, 2}, {16, 32, 3, 2}}, kTestBackboneKeyword);
  Rng rng(derive_seed(seed, 0x4c50));
  for (auto* p : net->parameters()) {
    auto& t = p->value;
    const bool bias = p->name.ends_with(".bias");
    const double std = bias ? 0.01 : std::sqrt(2.0 / (static_cast<double>(t.c()) * t.h() * t.w()));
    // Rounded to f32 so that a save/load round trip is exact.
    for (double& v : t.values()) v = static_cast<float>(std * rng.normal());
  }
  return net;
}

std::unique_ptr<FeatureExtractor> load_feature_extractor(const std::string& spec) {
  if (spec == kTestBackboneKeyword) return make_test_backbone();
  return ConvBackbone::load(spec);
}

double lpips(const RasterChip& a, const RasterChip& b, FeatureExtractor& backbone) {
  require_same_shape(a, b, "lpips");
  const auto fa = backbone.features(backbone_input(a));
  const auto fb = backbone.features(backbone_input(b));
  if (fa.size() != fb.size() || fa.empty()) {
    fail(ErrorKind::config, "backbone returned inconsistent feature layers");
  }
  constexpr double eps = 1e-10;
  const double weight = 1.0 / (2.0 * static_cast<double>(fa.size()));
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const auto& x = fa[l];
    const auto& y = fb[l];
    if (!x.same_shape(y)) fail(ErrorKind::dimension, "feature shapes differ");
    const std::size_t plane = x.plane();
    double layer_sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      double nx = 0.0, ny = 0.0;
      for (int c = 0; c < x.c(); ++c) {
        nx += x.channel(0, c)[p] * x.channel(0, c)[p];
        ny += y.channel(0, c)[p] * y.channel(0, c)[p];
      }
      nx = std::sqrt(nx) + eps;
      ny = std::sqrt(ny) + eps;
      double d = 0.0;
      for (int c = 0; c < x.c(); ++c) {
        const double diff = x.channel(0, c)[p] / nx - y.channel(0, c)[p] / ny;
        d += diff * diff;
      }
      layer_sum += weight * d;
    }
    total += layer_sum / static_cast<double>(plane);
  }
  return total;
}

}  // namespace s2e
