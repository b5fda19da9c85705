#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/error.hpp"
#include "s2e/nn/layers.hpp"

namespace s2e {

/// Global generator of the pix2pixHD family.
struct GeneratorConfig {
  int in_channels = 6;  // SAR channels + conditioning channels
  int out_channels = 3;
  int base_width = 64;
  int n_downsample = 4;
  int n_resblocks = 9;
  double dropout_rate = 0.5;  // inside residual blocks

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

/// Multi-scale ensemble of patch discriminators.
struct DiscriminatorConfig {
  int in_channels = 9;  // generator input channels + 3 EO channels
  int num_scales = 3;
  int base_width = 64;
  int n_layers = 3;
  // Instance norm in the inner stages. Switching it off makes every logit a
  // strictly local function of its receptive field.
  bool instance_norm = true;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

std::size_t generator_parameter_count(const GeneratorConfig& cfg);
std::size_t discriminator_parameter_count(const DiscriminatorConfig& cfg);

/// Receptive field (input pixels per axis) of one patch logit at scale 0.
int patch_receptive_field(const DiscriminatorConfig& cfg);

template <class T>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    using namespace nn;
    const int ngf = cfg.base_width;
    net_.template add<ReflectionPad2d<T>>(3);
    net_.template add<Conv2d<T>>("G.head.conv", cfg.in_channels, ngf, 7);
    net_.template add<InstanceNorm2d<T>>();
    net_.template add<ReLU<T>>();
    int width = ngf;
    for (int i = 0; i < cfg.n_downsample; ++i) {
      net_.template add<Conv2d<T>>("G.down" + std::to_string(i) + ".conv", width, width * 2, 3, 2, 1);
      net_.template add<InstanceNorm2d<T>>();
      net_.template add<ReLU<T>>();
      width *= 2;
    }
    for (int i = 0; i < cfg.n_resblocks; ++i) {
      const std::string name = "G.res" + std::to_string(i);
      auto& block = net_.template add<Residual<T>>();
      auto& body = block.body();
      body.template add<ReflectionPad2d<T>>(1);
      body.template add<Conv2d<T>>(name + ".conv0", width, width, 3);
      body.template add<InstanceNorm2d<T>>();
      body.template add<ReLU<T>>();
      if (cfg.dropout_rate > 0.0) {
        body.template add<Dropout<T>>(static_cast<T>(cfg.dropout_rate), static_cast<std::uint64_t>(i));
      }
      body.template add<ReflectionPad2d<T>>(1);
      body.template add<Conv2d<T>>(name + ".conv1", width, width, 3);
      body.template add<InstanceNorm2d<T>>();
    }
    for (int i = 0; i < cfg.n_downsample; ++i) {
      net_.template add<ConvTranspose2d<T>>("G.up" + std::to_string(i) + ".conv", width, width / 2,
                                            3, 2, 1, 1);
      net_.template add<InstanceNorm2d<T>>();
      net_.template add<ReLU<T>>();
      width /= 2;
    }
    net_.template add<ReflectionPad2d<T>>(3);
    net_.template add<Conv2d<T>>("G.tail.conv", ngf, cfg.out_channels, 7);
    net_.template add<Tanh<T>>();
    params_ = nn::parameters_of(net_);
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// Throws a config error for a wrong channel count or a spatial size the
  /// down/up path cannot reproduce exactly.
  void check_input(int channels, int height, int width) const {
    if (channels != cfg_.in_channels) {
      fail(ErrorKind::config, "generator expects " + std::to_string(cfg_.in_channels) +
                                  " input channels, got " + std::to_string(channels));
    }
    const int factor = 1 << cfg_.n_downsample;
    if (height % factor != 0 || width % factor != 0) {
      fail(ErrorKind::config, "generator input " + std::to_string(height) + "x" +
                                  std::to_string(width) + " is not divisible by " +
                                  std::to_string(factor));
    }
    if (height / factor < 2 || width / factor < 2 || height <= 3 || width <= 3) {
      fail(ErrorKind::config, "generator input too small");
    }
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, const nn::Context& ctx) {
    check_input(x.c(), x.h(), x.w());
    return net_.forward(x, ctx);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& grad_out) { return net_.backward(grad_out); }

  const std::vector<nn::Parameter<T>*>& parameters() const { return params_; }

 private:
  GeneratorConfig cfg_;
  nn::Sequential<T> net_;
  std::vector<nn::Parameter<T>*> params_;
};

/// Per-scale discriminator output: intermediate stage outputs (used for
/// feature matching) and the final patch logit grid.
template <class T>
struct ScaleOutput {
  std::vector<nn::Tensor<T>> features;
  nn::Tensor<T> logits;
};

template <class T>
using DiscriminatorOutput = std::vector<ScaleOutput<T>>;

/// Gradient with respect to one ScaleOutput; empty tensors mean zero.
template <class T>
struct ScaleGrad {
  std::vector<nn::Tensor<T>> features;
  nn::Tensor<T> logits;
};

template <class T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& cfg, const std::string& prefix) {
    using namespace nn;
    constexpr int k = 4;
    constexpr int pad = 2;
    int nf = cfg.base_width;
    {
      auto& s = stages_.emplace_back(std::make_unique<Sequential<T>>());
      s->template add<Conv2d<T>>(prefix + ".s0.conv", cfg.in_channels, nf, k, 2, pad);
      s->template add<LeakyReLU<T>>(T(0.2));
    }
    for (int n = 1; n <= cfg.n_layers; ++n) {
      const int prev = nf;
      nf = std::min(nf * 2, cfg.base_width * 8);
      const int stride = n < cfg.n_layers ? 2 : 1;
      auto& s = stages_.emplace_back(std::make_unique<Sequential<T>>());
      s->template add<Conv2d<T>>(prefix + ".s" + std::to_string(n) + ".conv", prev, nf, k, stride,
                                 pad);
      if (cfg.instance_norm) s->template add<InstanceNorm2d<T>>();
      s->template add<LeakyReLU<T>>(T(0.2));
    }
    auto& last = stages_.emplace_back(std::make_unique<Sequential<T>>());
    last->template add<Conv2d<T>>(prefix + ".s" + std::to_string(cfg.n_layers + 1) + ".conv", nf, 1,
                                  k, 1, pad);
  }

  ScaleOutput<T> forward(const nn::Tensor<T>& x, const nn::Context& ctx) {
    ScaleOutput<T> out;
    nn::Tensor<T> h = x;
    for (std::size_t i = 0; i + 1 < stages_.size(); ++i) {
      h = stages_[i]->forward(h, ctx);
      out.features.push_back(h);
    }
    out.logits = stages_.back()->forward(h, ctx);
    return out;
  }

  nn::Tensor<T> backward(const ScaleGrad<T>& grad) {
    nn::Tensor<T> g = grad.logits;
    for (std::size_t i = stages_.size(); i-- > 0;) {
      if (i + 1 < stages_.size() && i < grad.features.size() && !grad.features[i].empty()) {
        if (g.empty()) {
          g = grad.features[i];
        } else {
          g += grad.features[i];
        }
      }
      if (g.empty()) continue;  // nothing flows into this stage yet
      g = stages_[i]->backward(g);
    }
    return g;
  }

  void collect_parameters(std::vector<nn::Parameter<T>*>& out) {
    for (auto& s : stages_) s->collect_parameters(out);
  }

 private:
  std::vector<std::unique_ptr<nn::Sequential<T>>> stages_;
};

template <class T>
class MultiScaleDiscriminator {
 public:
  explicit MultiScaleDiscriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    for (int k = 0; k < cfg.num_scales; ++k) {
      scales_.push_back(std::make_unique<PatchDiscriminator<T>>(cfg, "D" + std::to_string(k)));
      if (k > 0) {
        auto down = std::make_unique<nn::Sequential<T>>();
        down->template add<nn::ReflectionPad2d<T>>(1);
        down->template add<nn::AvgPool2d<T>>(3, 2);
        downsample_.push_back(std::move(down));
      }
    }
    for (auto& s : scales_) s->collect_parameters(params_);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  /// Scale k sees the input average-pooled k times (factor 2^k).
  DiscriminatorOutput<T> forward(const nn::Tensor<T>& x, const nn::Context& ctx = {}) {
    if (x.c() != cfg_.in_channels) {
      fail(ErrorKind::config, "discriminator expects " + std::to_string(cfg_.in_channels) +
                                  " channels, got " + std::to_string(x.c()));
    }
    DiscriminatorOutput<T> out;
    nn::Tensor<T> h = x;
    for (int k = 0; k < cfg_.num_scales; ++k) {
      if (k > 0) h = downsample_[k - 1]->forward(h, ctx);
      out.push_back(scales_[k]->forward(h, ctx));
    }
    return out;
  }

  /// Back-propagates per-scale gradients of the latest forward; returns the
  /// gradient with respect to the input and accumulates parameter grads.
  nn::Tensor<T> backward(const std::vector<ScaleGrad<T>>& grads) {
    nn::Tensor<T> carry;
    for (int k = cfg_.num_scales - 1; k >= 0; --k) {
      nn::Tensor<T> g = scales_[k]->backward(grads.at(k));
      if (!carry.empty()) {
        if (g.empty()) {
          g = std::move(carry);
        } else {
          g += carry;
        }
      }
      carry = (k > 0 && !g.empty()) ? downsample_[k - 1]->backward(g) : std::move(g);
    }
    return carry;
  }

  const std::vector<nn::Parameter<T>*>& parameters() const { return params_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<std::unique_ptr<PatchDiscriminator<T>>> scales_;
  std::vector<std::unique_ptr<nn::Sequential<T>>> downsample_;
  std::vector<nn::Parameter<T>*> params_;
};

/// Stacks equally shaped chips into an N x C x H x W batch.
template <class T>
nn::Tensor<T> chips_to_tensor(std::span<const RasterChip> chips) {
  if (chips.empty()) return {};
  const RasterChip& first = chips.front();
  nn::Tensor<T> t(static_cast<int>(chips.size()), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < chips.size(); ++i) {
    const RasterChip& c = chips[i];
    if (c.channels() != first.channels() || c.height() != first.height() ||
        c.width() != first.width()) {
      fail(ErrorKind::dimension, "chips in a batch must share a shape");
    }
    std::copy(c.data().begin(), c.data().end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

template <class T>
RasterChip tensor_to_chip(const nn::Tensor<T>& t, int index, ValueRange range) {
  std::vector<float> data(t.sample_size());
  const T* src = t.sample(index);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(src[i]);
  return RasterChip(t.c(), t.h(), t.w(), std::move(data), range);
}

/// Inference helper. With `stochastic` the residual dropout stays active,
/// seeded by `noise_seed`; otherwise the output is deterministic.
RasterChip generate(Generator<float>& generator, const RasterChip& x_cond,
                    bool stochastic = false, std::uint64_t noise_seed = 0);

/// D applied to the channel concatenation of x_cond and y.
DiscriminatorOutput<float> discriminate(MultiScaleDiscriminator<float>& discriminator,
                                        const RasterChip& x_cond, const RasterChip& y);

/// Draws N(0, 0.02) weights and zero biases for a generator and
/// discriminator pair from one seed.
template <class T>
void initialize_weights(Generator<T>& g, MultiScaleDiscriminator<T>& d, std::uint64_t seed) {
  Rng rg(derive_seed(seed, 0x6e));
  nn::init_gaussian(g.parameters(), rg, 0.02);
  Rng rd(derive_seed(seed, 0x64));
  nn::init_gaussian(d.parameters(), rd, 0.02);
}

}  // namespace s2e
