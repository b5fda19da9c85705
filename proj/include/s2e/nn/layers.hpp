#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <algorithm>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s2e/nn/gemm.hpp"
#include "s2e/nn/tensor.hpp"
#include "s2e/rng.hpp"

namespace s2e::nn {

/// Per-forward settings. Dropout masks are a pure function of
/// (noise_seed, layer salt), which keeps training replayable.
struct Context {
  bool training = false;
  std::uint64_t noise_seed = 0;
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, int a, int b, int c, int d)
      : name(std::move(n)), value(a, b, c, d) {}

  // Gradients are allocated on first use so large inference-only models do
  // not pay for them.
  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>::zeros_like(value);
    return grad;
  }
};

/// Layers cache what backward needs during forward; a backward call always
/// refers to the most recent forward.
template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, const Context& ctx) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
};

namespace detail {

// Output columns [lo, hi) whose input column ox*stride - pad + kx is inside
// [0, width).
inline std::pair<int, int> valid_range(int width, int k_offset, int stride, int pad, int out_w) {
  const int shift = pad - k_offset;  // ix = ox*stride - shift
  const int lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  const int last = width - 1 + shift;
  const int hi = last < 0 ? 0 : last / stride + 1;
  return {std::min(lo, out_w), std::clamp(hi, std::min(lo, out_w), out_w)};
}

// col[(c*k*k + ky*k + kx), oy*ow + ox] = img[c, oy*s - p + ky, ox*s - p + kx]
template <class T>
void im2col(const T* img, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, T* col) {
  const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * positions;
        const auto [lo, hi] = valid_range(width, kx, stride, pad, out_w);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * width + kx - pad;
          std::fill(dst, dst + lo, T{});
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + out_w, T{});
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the (zeroed) image.
template <class T>
void col2im(const T* col, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, T* img) {
  const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * positions;
        const auto [lo, hi] = valid_range(width, kx, stride, pad, out_w);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * width + kx - pad;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace detail

/// 2-D convolution with zero padding.
template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1,
         int pad = 0, bool bias = true)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", out_channels, in_channels, kernel, kernel) {
    if (bias) bias_.emplace(name + ".bias", 1, out_channels, 1, 1);
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    if (x.c() != in_) {
      throw std::invalid_argument(weight_.name + ": expected " + std::to_string(in_) +
                                  " input channels, got " + std::to_string(x.c()));
    }
    input_ = x;
    const int oh = out_size(x.h());
    const int ow = out_size(x.w());
    if (oh <= 0 || ow <= 0) throw std::invalid_argument(weight_.name + ": input too small");
    Tensor<T> y(x.n(), out_, oh, ow);
    const int kk = in_ * k_ * k_;
    const int positions = oh * ow;
    col_.resize(static_cast<std::size_t>(kk) * positions);
    for (int i = 0; i < x.n(); ++i) {
      detail::im2col(x.sample(i), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col_.data());
      T* out = y.sample(i);
      if (bias_) {
        for (int o = 0; o < out_; ++o) {
          std::fill(out + static_cast<std::size_t>(o) * positions,
                    out + static_cast<std::size_t>(o + 1) * positions, bias_->value[o]);
        }
      }
      gemm(false, false, out_, positions, kk, T{1}, weight_.value.data(), kk, col_.data(),
           positions, bias_ ? T{1} : T{0}, out, positions);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const Tensor<T>& x = input_;
    const int oh = gy.h();
    const int ow = gy.w();
    const int kk = in_ * k_ * k_;
    const int positions = oh * ow;
    Tensor<T> gx(x.n(), x.c(), x.h(), x.w());
    col_.resize(static_cast<std::size_t>(kk) * positions);
    dcol_.resize(col_.size());
    for (int i = 0; i < x.n(); ++i) {
      const T* g = gy.sample(i);
      detail::im2col(x.sample(i), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col_.data());
      gemm(false, true, out_, kk, positions, T{1}, g, positions, col_.data(), positions, T{1},
           weight_.ensure_grad().data(), kk);
      if (bias_) {
        bias_->ensure_grad();
        for (int o = 0; o < out_; ++o) {
          T s{};
          const T* row = g + static_cast<std::size_t>(o) * positions;
          for (int p = 0; p < positions; ++p) s += row[p];
          bias_->grad[o] += s;
        }
      }
      gemm(true, false, kk, positions, out_, T{1}, weight_.value.data(), kk, g, positions, T{0},
           dcol_.data(), positions);
      detail::col2im(dcol_.data(), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, gx.sample(i));
    }
    return gx;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

 private:
  int in_, out_, k_, stride_, pad_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
  std::vector<T> col_, dcol_;
};

/// Transposed convolution; weight layout in x out x kh x kw.
template <class T>
class ConvTranspose2d : public Layer<T> {
 public:
  ConvTranspose2d(const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int pad, int output_pad, bool bias = true)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
        output_pad_(output_pad),
        weight_(name + ".weight", in_channels, out_channels, kernel, kernel) {
    if (bias) bias_.emplace(name + ".bias", 1, out_channels, 1, 1);
  }

  int out_size(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_ + output_pad_; }

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    if (x.c() != in_) {
      throw std::invalid_argument(weight_.name + ": expected " + std::to_string(in_) +
                                  " input channels, got " + std::to_string(x.c()));
    }
    input_ = x;
    const int oh = out_size(x.h());
    const int ow = out_size(x.w());
    Tensor<T> y(x.n(), out_, oh, ow);
    const int kk = out_ * k_ * k_;
    const int positions = x.h() * x.w();
    col_.resize(static_cast<std::size_t>(kk) * positions);
    for (int i = 0; i < x.n(); ++i) {
      gemm(true, false, kk, positions, in_, T{1}, weight_.value.data(), kk, x.sample(i),
           positions, T{0}, col_.data(), positions);
      detail::col2im(col_.data(), out_, oh, ow, k_, stride_, pad_, x.h(), x.w(), y.sample(i));
      if (bias_) {
        for (int o = 0; o < out_; ++o) {
          T* plane = y.channel(i, o);
          for (std::size_t p = 0; p < y.plane(); ++p) plane[p] += bias_->value[o];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const Tensor<T>& x = input_;
    const int kk = out_ * k_ * k_;
    const int positions = x.h() * x.w();
    Tensor<T> gx(x.n(), x.c(), x.h(), x.w());
    col_.resize(static_cast<std::size_t>(kk) * positions);
    for (int i = 0; i < x.n(); ++i) {
      detail::im2col(gy.sample(i), out_, gy.h(), gy.w(), k_, stride_, pad_, x.h(), x.w(),
                     col_.data());
      gemm(false, false, in_, positions, kk, T{1}, weight_.value.data(), kk, col_.data(),
           positions, T{0}, gx.sample(i), positions);
      gemm(false, true, in_, kk, positions, T{1}, x.sample(i), positions, col_.data(),
           positions, T{1}, weight_.ensure_grad().data(), kk);
      if (bias_) {
        bias_->ensure_grad();
        for (int o = 0; o < out_; ++o) {
          const T* plane = gy.channel(i, o);
          T s{};
          for (std::size_t p = 0; p < gy.plane(); ++p) s += plane[p];
          bias_->grad[o] += s;
        }
      }
    }
    return gx;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

 private:
  int in_, out_, k_, stride_, pad_, output_pad_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
  std::vector<T> col_;
};

template <class T>
class ReflectionPad2d : public Layer<T> {
 public:
  explicit ReflectionPad2d(int pad) : pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    if (pad_ >= x.h() || pad_ >= x.w()) {
      throw std::invalid_argument("reflection padding must be smaller than the input");
    }
    in_h_ = x.h();
    in_w_ = x.w();
    const int oh = x.h() + 2 * pad_;
    const int ow = x.w() + 2 * pad_;
    Tensor<T> y(x.n(), x.c(), oh, ow);
    for (int i = 0; i < x.n(); ++i) {
      for (int c = 0; c < x.c(); ++c) {
        const T* src = x.channel(i, c);
        T* dst = y.channel(i, c);
        for (int oy = 0; oy < oh; ++oy) {
          const T* row = src + static_cast<std::size_t>(detail::reflect_index(oy - pad_, in_h_)) * in_w_;
          T* out = dst + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) out[ox] = row[detail::reflect_index(ox - pad_, in_w_)];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.n(), gy.c(), in_h_, in_w_);
    for (int i = 0; i < gy.n(); ++i) {
      for (int c = 0; c < gy.c(); ++c) {
        const T* src = gy.channel(i, c);
        T* dst = gx.channel(i, c);
        for (int oy = 0; oy < gy.h(); ++oy) {
          T* row = dst + static_cast<std::size_t>(detail::reflect_index(oy - pad_, in_h_)) * in_w_;
          const T* g = src + static_cast<std::size_t>(oy) * gy.w();
          for (int ox = 0; ox < gy.w(); ++ox) row[detail::reflect_index(ox - pad_, in_w_)] += g[ox];
        }
      }
    }
    return gx;
  }

 private:
  int pad_;
  int in_h_ = 0;
  int in_w_ = 0;
};

/// Non-affine instance normalization.
template <class T>
class InstanceNorm2d : public Layer<T> {
 public:
  explicit InstanceNorm2d(T eps = T(1e-5)) : eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    normalized_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    inv_std_.assign(static_cast<std::size_t>(x.n()) * x.c(), T{});
    const std::size_t n = x.plane();
    for (int i = 0; i < x.n(); ++i) {
      for (int c = 0; c < x.c(); ++c) {
        const T* src = x.channel(i, c);
        double mean = 0.0;
        for (std::size_t p = 0; p < n; ++p) mean += src[p];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          const double d = src[p] - mean;
          var += d * d;
        }
        var /= static_cast<double>(n);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        inv_std_[static_cast<std::size_t>(i) * x.c() + c] = inv;
        T* dst = normalized_.channel(i, c);
        const T m = static_cast<T>(mean);
        for (std::size_t p = 0; p < n; ++p) dst[p] = (src[p] - m) * inv;
      }
    }
    return normalized_;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.n(), gy.c(), gy.h(), gy.w());
    const std::size_t n = gy.plane();
    for (int i = 0; i < gy.n(); ++i) {
      for (int c = 0; c < gy.c(); ++c) {
        const T* g = gy.channel(i, c);
        const T* xhat = normalized_.channel(i, c);
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          mean_g += g[p];
          mean_gx += static_cast<double>(g[p]) * xhat[p];
        }
        mean_g /= static_cast<double>(n);
        mean_gx /= static_cast<double>(n);
        const T inv = inv_std_[static_cast<std::size_t>(i) * gy.c() + c];
        T* dst = gx.channel(i, c);
        const T mg = static_cast<T>(mean_g);
        const T mgx = static_cast<T>(mean_gx);
        for (std::size_t p = 0; p < n; ++p) dst[p] = inv * (g[p] - mg - xhat[p] * mgx);
      }
    }
    return gx;
  }

 private:
  T eps_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
};

template <class T>
class LeakyReLU : public Layer<T> {
 public:
  explicit LeakyReLU(T slope) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    output_ = x;
    const T slope = slope_;
    for (auto& v : output_.values()) v = std::max(v, T{0}) + slope * std::min(v, T{0});
    return output_;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    T* g = gx.data();
    const T* y = output_.data();
    const T slope = slope_;
    for (std::size_t i = 0; i < gx.size(); ++i) g[i] *= y[i] > T{0} ? T{1} : slope;
    return gx;
  }

 private:
  T slope_;
  Tensor<T> output_;
};

template <class T>
class ReLU : public LeakyReLU<T> {
 public:
  ReLU() : LeakyReLU<T>(T{0}) {}
};

/// tanh, clamped to the largest representable value below 1 so outputs stay
/// strictly inside (-1, 1) even when tanh rounds to +-1.
template <class T>
class Tanh : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    constexpr T bound = static_cast<T>(1) - std::numeric_limits<T>::epsilon() / 2;
    output_ = x;
    for (auto& v : output_.values()) v = std::clamp(std::tanh(v), -bound, bound);
    return output_;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= T{1} - output_[i] * output_[i];
    return gx;
  }

 private:
  Tensor<T> output_;
};

/// Inverted dropout, active only when ctx.training is set.
template <class T>
class Dropout : public Layer<T> {
 public:
  Dropout(T rate, std::uint64_t salt) : rate_(rate), salt_(salt) {}

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    active_ = ctx.training && rate_ > T{0};
    if (!active_) return x;
    Rng rng(derive_seed(ctx.noise_seed, salt_));
    const T scale = T{1} / (T{1} - rate_);
    mask_.resize(x.size());
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask_[i] = rng.uniform() >= static_cast<double>(rate_) ? scale : T{0};
      y[i] *= mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    if (!active_) return gy;
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask_[i];
    return gx;
  }

 private:
  T rate_;
  std::uint64_t salt_;
  bool active_ = false;
  std::vector<T> mask_;
};

/// Average pooling without padding.
template <class T>
class AvgPool2d : public Layer<T> {
 public:
  AvgPool2d(int kernel, int stride) : k_(kernel), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x, const Context&) override {
    in_h_ = x.h();
    in_w_ = x.w();
    const int oh = (x.h() - k_) / stride_ + 1;
    const int ow = (x.w() - k_) / stride_ + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("avg pool input too small");
    Tensor<T> y(x.n(), x.c(), oh, ow);
    const T norm = T{1} / static_cast<T>(k_ * k_);
    for (int i = 0; i < x.n(); ++i) {
      for (int c = 0; c < x.c(); ++c) {
        const T* src = x.channel(i, c);
        T* dst = y.channel(i, c);
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            T s{};
            for (int ky = 0; ky < k_; ++ky) {
              const T* row = src + static_cast<std::size_t>(oy * stride_ + ky) * in_w_ + ox * stride_;
              for (int kx = 0; kx < k_; ++kx) s += row[kx];
            }
            dst[static_cast<std::size_t>(oy) * ow + ox] = s * norm;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.n(), gy.c(), in_h_, in_w_);
    const T norm = T{1} / static_cast<T>(k_ * k_);
    for (int i = 0; i < gy.n(); ++i) {
      for (int c = 0; c < gy.c(); ++c) {
        const T* g = gy.channel(i, c);
        T* dst = gx.channel(i, c);
        for (int oy = 0; oy < gy.h(); ++oy) {
          for (int ox = 0; ox < gy.w(); ++ox) {
            const T v = g[static_cast<std::size_t>(oy) * gy.w() + ox] * norm;
            for (int ky = 0; ky < k_; ++ky) {
              T* row = dst + static_cast<std::size_t>(oy * stride_ + ky) * in_w_ + ox * stride_;
              for (int kx = 0; kx < k_; ++kx) row[kx] += v;
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  int k_, stride_;
  int in_h_ = 0;
  int in_w_ = 0;
};

template <class T>
class Sequential : public Layer<T> {
 public:
  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void append(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    if (layers_.empty()) return x;
    Tensor<T> h = layers_.front()->forward(x, ctx);
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, ctx);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    for (auto& layer : layers_) layer->collect_parameters(out);
  }

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// y = x + body(x)
template <class T>
class Residual : public Layer<T> {
 public:
  Sequential<T>& body() { return body_; }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    Tensor<T> y = body_.forward(x, ctx);
    y += x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> g = body_.backward(gy);
    g += gy;
    return g;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    body_.collect_parameters(out);
  }

 private:
  Sequential<T> body_;
};

template <class T>
std::vector<Parameter<T>*> parameters_of(Layer<T>& layer) {
  std::vector<Parameter<T>*> out;
  layer.collect_parameters(out);
  return out;
}

template <class T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->ensure_grad().fill(T{0});
}

/// Zero-mean Gaussian weights, zero biases.
template <class T>
void init_gaussian(const std::vector<Parameter<T>*>& params, Rng& rng, double stddev) {
  for (auto* p : params) {
    const bool is_bias = p->name.size() >= 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0;
    for (auto& v : p->value.values()) v = is_bias ? T{0} : static_cast<T>(rng.normal() * stddev);
  }
}

}  // namespace s2e::nn
