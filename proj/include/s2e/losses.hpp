#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/error.hpp"
#include "s2e/model.hpp"

namespace s2e {

/// The four adversarial objectives. They differ only in what G and D see:
///   gan_eq1        G(z), D(y)             (noise planes in, no conditioning)
///   cgan_eq2       G(x), D(x, y)          (noise through dropout)
///   pix2pix_eq3    G(x), D(x, y)          (same plumbing as cgan_eq2)
///   multicond_eq4  G(x, s), D(x, s, y)    (s must be non-empty)
enum class Objective { gan_eq1, cgan_eq2, pix2pix_eq3, multicond_eq4 };

enum class AdversarialForm { log_sigmoid, least_squares };

const char* to_string(Objective objective);
Objective parse_objective(std::string_view text);
const char* to_string(AdversarialForm form);
AdversarialForm parse_adversarial_form(std::string_view text);

struct LossConfig {
  Objective objective = Objective::multicond_eq4;
  double lambda_fm = 10.0;
  AdversarialForm adversarial_form = AdversarialForm::log_sigmoid;
  // Generator minimizes log(1 - D(G)) literally instead of -log D(G).
  bool minimax_generator = false;

  /// lambda_fm >= 0; multicond_eq4 needs conditioning, cgan/pix2pix must
  /// have none.
  void validate(const Conditioning& conditioning) const;
  bool operator==(const LossConfig&) const = default;
};

/// Objective chosen by default for a conditioning list.
Objective default_objective(const Conditioning& conditioning);

/// Channel count of the generator input for an objective.
int generator_input_channels(Objective objective, int sar_channels,
                             const Conditioning& conditioning);

/// Channel count seen by the discriminator (target EO included).
int discriminator_input_channels(Objective objective, int sar_channels,
                                 const Conditioning& conditioning);

/// Generator input for a batch: x_cond itself, or seeded N(0, 1) planes with
/// the same shape for gan_eq1.
template <class T>
nn::Tensor<T> generator_input(Objective objective, const nn::Tensor<T>& x_cond,
                              std::uint64_t noise_seed) {
  if (objective != Objective::gan_eq1) return x_cond;
  nn::Tensor<T> z = nn::Tensor<T>::zeros_like(x_cond);
  Rng rng(derive_seed(noise_seed, 0x7a));
  for (auto& v : z.values()) v = static_cast<T>(rng.normal());
  return z;
}

/// Discriminator input: y alone for gan_eq1, otherwise concat(x_cond, y).
template <class T>
nn::Tensor<T> discriminator_input(Objective objective, const nn::Tensor<T>& x_cond,
                                  const nn::Tensor<T>& y) {
  if (objective == Objective::gan_eq1) return y;
  return nn::concat_channels(x_cond, y);
}

template <class T>
struct LogitGrads {
  std::vector<nn::Tensor<T>> per_scale;
};

template <class T>
struct DLossResult {
  T value{};
  std::vector<nn::Tensor<T>> grad_real;
  std::vector<nn::Tensor<T>> grad_fake;
};

template <class T>
struct GLossResult {
  T value{};
  std::vector<nn::Tensor<T>> grad_fake;
};

template <class T>
struct FeatureLossResult {
  T value{};
  std::vector<std::vector<nn::Tensor<T>>> grad_fake;  // [scale][layer]
};

namespace detail {

template <class T>
T softplus(T x) {
  // log(1 + e^x), stable for large |x|
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
void check_finite(const std::vector<nn::Tensor<T>>& logits, const char* which) {
  for (std::size_t k = 0; k < logits.size(); ++k) {
    for (T v : logits[k].values()) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::numeric, std::string("non-finite ") + which + " logit at scale " +
                                     std::to_string(k));
      }
    }
  }
}

}  // namespace detail

/// Discriminator loss averaged over scales and patches:
///   log_sigmoid    mean softplus(-real) + mean softplus(fake)
///                  (= -[log sigma(real) + log(1 - sigma(fake))])
///   least_squares  mean (real - 1)^2 + mean fake^2
template <class T>
DLossResult<T> d_loss(const std::vector<nn::Tensor<T>>& real,
                      const std::vector<nn::Tensor<T>>& fake, const LossConfig& cfg) {
  if (real.size() != fake.size() || real.empty()) {
    fail(ErrorKind::dimension, "d_loss needs matching, non-empty scale lists");
  }
  detail::check_finite(real, "real");
  detail::check_finite(fake, "fake");
  DLossResult<T> out;
  const T scales = static_cast<T>(real.size());
  double total = 0.0;
  for (std::size_t k = 0; k < real.size(); ++k) {
    const auto& r = real[k];
    const auto& f = fake[k];
    auto gr = nn::Tensor<T>::zeros_like(r);
    auto gf = nn::Tensor<T>::zeros_like(f);
    const T nr = static_cast<T>(r.size()) * scales;
    const T nf = static_cast<T>(f.size()) * scales;
    double sr = 0.0;
    double sf = 0.0;
    if (cfg.adversarial_form == AdversarialForm::log_sigmoid) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        sr += detail::softplus(-r[i]);
        gr[i] = (detail::sigmoid(r[i]) - T{1}) / nr;
      }
      for (std::size_t i = 0; i < f.size(); ++i) {
        sf += detail::softplus(f[i]);
        gf[i] = detail::sigmoid(f[i]) / nf;
      }
    } else {
      for (std::size_t i = 0; i < r.size(); ++i) {
        sr += static_cast<double>((r[i] - T{1}) * (r[i] - T{1}));
        gr[i] = T{2} * (r[i] - T{1}) / nr;
      }
      for (std::size_t i = 0; i < f.size(); ++i) {
        sf += static_cast<double>(f[i] * f[i]);
        gf[i] = T{2} * f[i] / nf;
      }
    }
    total += sr / static_cast<double>(r.size()) + sf / static_cast<double>(f.size());
    out.grad_real.push_back(std::move(gr));
    out.grad_fake.push_back(std::move(gf));
  }
  out.value = static_cast<T>(total / static_cast<double>(real.size()));
  return out;
}

/// Generator adversarial loss averaged over scales and patches:
///   non-saturating  mean softplus(-fake)   (= -log sigma(fake))
///   minimax         -mean softplus(fake)   (= log(1 - sigma(fake)))
///   least_squares   mean (fake - 1)^2
template <class T>
GLossResult<T> g_adv_loss(const std::vector<nn::Tensor<T>>& fake, const LossConfig& cfg) {
  if (fake.empty()) fail(ErrorKind::dimension, "g_adv_loss needs at least one scale");
  detail::check_finite(fake, "fake");
  GLossResult<T> out;
  const T scales = static_cast<T>(fake.size());
  double total = 0.0;
  for (const auto& f : fake) {
    auto g = nn::Tensor<T>::zeros_like(f);
    const T n = static_cast<T>(f.size()) * scales;
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (cfg.adversarial_form == AdversarialForm::least_squares) {
        s += static_cast<double>((f[i] - T{1}) * (f[i] - T{1}));
        g[i] = T{2} * (f[i] - T{1}) / n;
      } else if (cfg.minimax_generator) {
        s -= detail::softplus(f[i]);
        g[i] = -detail::sigmoid(f[i]) / n;
      } else {
        s += detail::softplus(-f[i]);
        g[i] = (detail::sigmoid(f[i]) - T{1}) / n;
      }
    }
    total += s / static_cast<double>(f.size());
    out.grad_fake.push_back(std::move(g));
  }
  out.value = static_cast<T>(total / static_cast<double>(fake.size()));
  return out;
}

/// Mean absolute difference per layer, averaged over layers and then scales.
/// Gradients flow into the fake features only.
template <class T>
FeatureLossResult<T> feature_matching_loss(const std::vector<std::vector<nn::Tensor<T>>>& real,
                                           const std::vector<std::vector<nn::Tensor<T>>>& fake) {
  if (real.size() != fake.size() || real.empty()) {
    fail(ErrorKind::dimension, "feature lists differ in scale count");
  }
  FeatureLossResult<T> out;
  double total = 0.0;
  const double scales = static_cast<double>(real.size());
  for (std::size_t k = 0; k < real.size(); ++k) {
    if (real[k].size() != fake[k].size() || real[k].empty()) {
      fail(ErrorKind::dimension, "feature lists differ in layer count at scale " + std::to_string(k));
    }
    const double layers = static_cast<double>(real[k].size());
    std::vector<nn::Tensor<T>> grads;
    double scale_sum = 0.0;
    for (std::size_t l = 0; l < real[k].size(); ++l) {
      const auto& r = real[k][l];
      const auto& f = fake[k][l];
      if (!r.same_shape(f)) {
        fail(ErrorKind::dimension, "feature shape mismatch at scale " + std::to_string(k) +
                                       " layer " + std::to_string(l));
      }
      auto g = nn::Tensor<T>::zeros_like(f);
      const T w = static_cast<T>(1.0 / (static_cast<double>(f.size()) * layers * scales));
      double s = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const T d = f[i] - r[i];
        s += std::abs(static_cast<double>(d));
        g[i] = d > T{0} ? w : (d < T{0} ? -w : T{0});
      }
      scale_sum += s / static_cast<double>(f.size());
      grads.push_back(std::move(g));
    }
    total += scale_sum / layers;
    out.grad_fake.push_back(std::move(grads));
  }
  out.value = static_cast<T>(total / scales);
  return out;
}

inline double total_g_loss(double adv, double fm, const LossConfig& cfg) {
  return adv + cfg.lambda_fm * fm;
}

template <class T>
std::vector<nn::Tensor<T>> logits_of(const DiscriminatorOutput<T>& out) {
  std::vector<nn::Tensor<T>> logits;
  for (const auto& s : out) logits.push_back(s.logits);
  return logits;
}

template <class T>
std::vector<std::vector<nn::Tensor<T>>> features_of(const DiscriminatorOutput<T>& out) {
  std::vector<std::vector<nn::Tensor<T>>> feats;
  for (const auto& s : out) feats.push_back(s.features);
  return feats;
}

}  // namespace s2e
