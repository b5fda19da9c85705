#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2e::nn {

/// Dense NCHW tensor. Parameters reuse the layout (e.g. conv weights are
/// out x in x kh x kw).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : n_(n), c_(c), h_(h), w_(w),
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const noexcept { return n_; }
  int c() const noexcept { return c_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const noexcept { return c_ * plane(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T* sample(int i) noexcept { return data_.data() + i * sample_size(); }
  const T* sample(int i) const noexcept { return data_.data() + i * sample_size(); }
  T* channel(int i, int ch) noexcept { return sample(i) + ch * plane(); }
  const T* channel(int i, int ch) const noexcept { return sample(i) + ch * plane(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator()(int n, int c, int y, int x) noexcept {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  T operator()(int n, int c, int y, int x) const noexcept {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }

  bool same_shape(const Tensor& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
           std::to_string(w_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("tensor shape mismatch in +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n_, o.c_, o.h_, o.w_); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor& o) const { return same_shape(o) && data_ == o.data_; }

 private:
  int n_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<T> data_;
};

/// Channel concatenation of equally sized batches.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels: shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

/// Channels [first, first + count) of every sample.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  Tensor<T> out(t.n(), count, t.h(), t.w());
  for (int i = 0; i < t.n(); ++i) {
    std::copy(t.channel(i, first), t.channel(i, first) + count * t.plane(), out.sample(i));
  }
  return out;
}

/// Samples [first, first + count).
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  Tensor<T> out(count, t.c(), t.h(), t.w());
  std::copy(t.sample(first), t.sample(first) + count * t.sample_size(), out.data());
  return out;
}

template <class T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_batch: shape mismatch");
  }
  Tensor<T> out(a.n() + b.n(), a.c(), a.h(), a.w());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

}  // namespace s2e::nn
