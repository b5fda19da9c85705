#include "s2e/model.hpp"

namespace s2e {

void GeneratorConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::config, "generator in_channels must be >= 1");
  if (out_channels < 1) fail(ErrorKind::config, "generator out_channels must be >= 1");
  if (base_width < 1) fail(ErrorKind::config, "generator base_width must be >= 1");
  if (n_downsample < 0 || n_downsample > 8) fail(ErrorKind::config, "n_downsample out of range");
  if (n_resblocks < 0) fail(ErrorKind::config, "n_resblocks must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail(ErrorKind::config, "dropout_rate must lie in [0, 1)");
  }
}

void DiscriminatorConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::config, "discriminator in_channels must be >= 1");
  if (num_scales < 1) fail(ErrorKind::config, "num_scales must be >= 1");
  if (base_width < 1) fail(ErrorKind::config, "discriminator base_width must be >= 1");
  if (n_layers < 1) fail(ErrorKind::config, "n_layers must be >= 1");
}

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) {
  return in * out * k * k + out;
}

}  // namespace

std::size_t generator_parameter_count(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t ngf = cfg.base_width;
  std::size_t total = conv_params(cfg.in_channels, ngf, 7);
  std::size_t w = ngf;
  for (int i = 0; i < cfg.n_downsample; ++i, w *= 2) total += conv_params(w, 2 * w, 3);
  total += static_cast<std::size_t>(cfg.n_resblocks) * 2 * conv_params(w, w, 3);
  for (int i = 0; i < cfg.n_downsample; ++i, w /= 2) total += conv_params(w, w / 2, 3);
  total += conv_params(ngf, cfg.out_channels, 7);
  return total;
}

std::size_t discriminator_parameter_count(const DiscriminatorConfig& cfg) {
  cfg.validate();
  std::size_t nf = cfg.base_width;
  std::size_t per_scale = conv_params(cfg.in_channels, nf, 4);
  for (int n = 1; n <= cfg.n_layers; ++n) {
    const std::size_t prev = nf;
    nf = std::min<std::size_t>(nf * 2, static_cast<std::size_t>(cfg.base_width) * 8);
    per_scale += conv_params(prev, nf, 4);
  }
  per_scale += conv_params(nf, 1, 4);
  return per_scale * static_cast<std::size_t>(cfg.num_scales);
}

int patch_receptive_field(const DiscriminatorConfig& cfg) {
  std::vector<int> strides{2};
  for (int n = 1; n <= cfg.n_layers; ++n) strides.push_back(n < cfg.n_layers ? 2 : 1);
  strides.push_back(1);
  int r = 1;
  for (auto it = strides.rbegin(); it != strides.rend(); ++it) r = (r - 1) * *it + 4;
  return r;
}

RasterChip generate(Generator<float>& generator, const RasterChip& x_cond, bool stochastic,
                    std::uint64_t noise_seed) {
  generator.check_input(x_cond.channels(), x_cond.height(), x_cond.width());
  if (x_cond.value_range() != ValueRange::unit_signed) {
    fail(ErrorKind::range, "generator input must be unit_signed");
  }
  const auto x = chips_to_tensor<float>(std::span<const RasterChip>(&x_cond, 1));
  nn::Context ctx{stochastic, noise_seed};
  const auto y = generator.forward(x, ctx);
  return tensor_to_chip(y, 0, ValueRange::unit_signed);
}

DiscriminatorOutput<float> discriminate(MultiScaleDiscriminator<float>& discriminator,
                                        const RasterChip& x_cond, const RasterChip& y) {
  if (x_cond.height() != y.height() || x_cond.width() != y.width()) {
    fail(ErrorKind::dimension, "discriminator inputs differ in spatial size");
  }
  if (y.channels() != 3) fail(ErrorKind::dimension, "discriminator target must have 3 channels");
  const auto x = chips_to_tensor<float>(std::span<const RasterChip>(&x_cond, 1));
  const auto t = chips_to_tensor<float>(std::span<const RasterChip>(&y, 1));
  return discriminator.forward(nn::concat_channels(x, t));
}

}  // namespace s2e
