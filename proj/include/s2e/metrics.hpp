#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/nn/layers.hpp"

namespace s2e {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over all channels and pixels, capped at 100 dB
/// once MSE < peak^2 * 1e-10.
double psnr(const RasterChip& a, const RasterChip& b, double peak);

/// Peak taken from the value range: 2 for unit_signed, 1 for unit. Raw chips
/// need an explicit peak.
double psnr(const RasterChip& a, const RasterChip& b);

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, mean over every window fully inside the image and over
/// channels. unit_signed chips are mapped to [0, 1] first. Result is in
/// [-1, 1]; reports clip it to [0, 1].
double ssim(const RasterChip& a, const RasterChip& b);

inline constexpr int kSsimWindow = 11;

/// Local SSIM of every fully covered window, one (H-10) x (W-10) map per
/// channel. ssim() is the mean of these maps.
std::vector<std::vector<double>> ssim_map(const RasterChip& a, const RasterChip& b);

/// Per-layer feature maps of a perceptual backbone.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// Input: 1 x 3 x H x W in [-1, 1]. Output: one map per layer.
  virtual std::vector<nn::Tensor<double>> features(const nn::Tensor<double>& image) = 0;
  virtual std::string name() const = 0;
};

struct BackboneLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
};

/// Plain conv stack; every conv (padding kernel/2) is followed by a ReLU and
/// each ReLU output is one feature layer.
///
/// Weights file (little-endian): "S2ELPIP1", u32 layer count, per layer
/// u32 in/out/kernel/stride, then per layer f32 weights (out x in x k x k)
/// followed by f32 biases.
class ConvBackbone : public FeatureExtractor {
 public:
  explicit ConvBackbone(std::vector<BackboneLayer> layers, std::string name = "conv-backbone");

  static std::unique_ptr<ConvBackbone> load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<nn::Tensor<double>> features(const nn::Tensor<double>& image) override;
  std::string name() const override { return name_; }

  const std::vector<BackboneLayer>& layers() const { return layers_; }
  std::vector<nn::Parameter<double>*> parameters();

 private:
  std::vector<BackboneLayer> layers_;
  std::string name_;
  std::vector<std::unique_ptr<nn::Conv2d<double>>> convs_;
};

inline constexpr std::uint64_t kTestBackboneSeed = 20240917;
inline constexpr const char* kTestBackboneKeyword = "test-backbone";
inline constexpr const char* kTestBackboneFile = "lpips_test_backbone.bin";

/// Small deterministic backbone (3->8 s1, 8->16 s2, 16->32 s2) with
/// He-normal weights from a fixed seed. The committed
/// data/lpips_test_backbone.bin is this network.
std::unique_ptr<ConvBackbone> make_test_backbone(std::uint64_t seed = kTestBackboneSeed);

/// "test-backbone" builds the bundled test network; anything else is a
/// weights file path. A missing file is a config error naming the path.
std::unique_ptr<FeatureExtractor> load_feature_extractor(const std::string& spec);

/// Perceptual distance: each layer's features are normalized to unit length
/// along channels at every pixel, squared differences are summed over
/// channels with weight 1/(2L) and averaged spatially, then summed over the
/// L layers. Non-negative ReLU features keep the value in [0, 1].
double lpips(const RasterChip& a, const RasterChip& b, FeatureExtractor& backbone);

}  // namespace s2e
