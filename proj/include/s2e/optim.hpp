#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "s2e/nn/layers.hpp"

namespace s2e {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are stored per parameter in the same
/// order as the parameter list.
template <class T>
class Adam {
 public:
  Adam(std::vector<nn::Parameter<T>*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(nn::Tensor<T>::zeros_like(p->value));
      v_.push_back(nn::Tensor<T>::zeros_like(p->value));
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(cfg_.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      const auto& g = p->ensure_grad();
      T* m = m_[i].data();
      T* v = v_[i].data();
      T* w = p->value.data();
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = b1 * m[j] + (T{1} - b1) * g[j];
        v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
        w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<nn::Tensor<T>>& first_moments() { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() { return v_; }
  const std::vector<nn::Parameter<T>*>& parameters() const { return params_; }

 private:
  std::vector<nn::Parameter<T>*> params_;
  AdamConfig cfg_;
  std::vector<nn::Tensor<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace s2e
