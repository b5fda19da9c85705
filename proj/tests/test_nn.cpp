#include <gtest/gtest.h>

#include "s2e/losses.hpp"
#include "s2e/model.hpp"
#include "s2e/optim.hpp"
#include "test_util.hpp"

using namespace s2e;
using namespace s2e::nn;
using s2e::testing::random_tensor;

namespace {

// Checks d/dx and d/dtheta of sum(r * layer(x)) against central differences.
double layer_gradient_error(Layer<double>& layer, Tensor<double> x, const Context& ctx,
                            std::uint64_t seed) {
  auto params = parameters_of(layer);
  {
    Rng rng(seed + 1);
    for (auto* p : params) {
      for (auto& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
    }
  }
  const auto y0 = layer.forward(x, ctx);
  const auto r = random_tensor<double>(y0.n(), y0.c(), y0.h(), y0.w(), seed + 2);
  zero_grad(params);
  layer.forward(x, ctx);
  const auto gx = layer.backward(r);

  std::vector<double> analytic(gx.values().begin(), gx.values().end());
  std::vector<double> flat(x.values().begin(), x.values().end());
  for (auto* p : params) analytic.insert(analytic.end(), p->grad.values().begin(), p->grad.values().end());
  for (auto* p : params) flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());

  auto f = [&]() {
    std::size_t k = 0;
    for (auto& v : x.values()) v = flat[k++];
    for (auto* p : params) {
      for (auto& v : p->value.values()) v = flat[k++];
    }
    return s2e::testing::dot(layer.forward(x, ctx), r);
  };
  const auto numeric = s2e::testing::numeric_gradient(flat, f);
  return s2e::testing::relative_error(analytic, numeric);
}

}  // namespace

TEST(Layers, Conv2dGradient) {
  Conv2d<double> conv("c", 3, 4, 3, 2, 1);
  EXPECT_LT(layer_gradient_error(conv, random_tensor<double>(2, 3, 7, 6, 1), {}, 10), 1e-7);
  Conv2d<double> k4("c", 2, 3, 4, 1, 2);
  EXPECT_LT(layer_gradient_error(k4, random_tensor<double>(1, 2, 5, 5, 2), {}, 11), 1e-7);
}

TEST(Layers, ConvTransposeGradient) {
  ConvTranspose2d<double> up("u", 4, 2, 3, 2, 1, 1);
  const auto x = random_tensor<double>(2, 4, 3, 4, 3);
  EXPECT_LT(layer_gradient_error(up, x, {}, 12), 1e-7);
  Context ctx;
  const auto y = up.forward(x, ctx);
  EXPECT_EQ(y.h(), 6);
  EXPECT_EQ(y.w(), 8);
}

// Transposed convolution is the adjoint of the strided convolution that
// shares its weights: <conv(x), y> == <x, convT(y)>.
TEST(Layers, ConvTransposeIsAdjointOfConv) {
  Conv2d<double> conv("c", 2, 3, 3, 2, 1, false);
  ConvTranspose2d<double> up("u", 3, 2, 3, 2, 1, 1, false);
  auto pc = parameters_of(conv);
  auto pu = parameters_of(up);
  Rng rng(5);
  for (auto& v : pc[0]->value.values()) v = rng.uniform(-1, 1);
  pu[0]->value = pc[0]->value;  // out x in x k x k read as in x out x k x k
  const auto x = random_tensor<double>(1, 2, 8, 8, 6);
  const auto y = random_tensor<double>(1, 3, 4, 4, 7);
  const double lhs = s2e::testing::dot(conv.forward(x, {}), y);
  const double rhs = s2e::testing::dot(x, up.forward(y, {}));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Layers, PadNormActivationGradients) {
  const auto x = random_tensor<double>(2, 3, 5, 4, 4);
  ReflectionPad2d<double> pad(2);
  EXPECT_LT(layer_gradient_error(pad, x, {}, 13), 1e-8);
  InstanceNorm2d<double> norm;
  EXPECT_LT(layer_gradient_error(norm, x, {}, 14), 1e-6);
  LeakyReLU<double> lrelu(0.2);
  EXPECT_LT(layer_gradient_error(lrelu, x, {}, 15), 1e-8);
  Tanh<double> tanh_layer;
  EXPECT_LT(layer_gradient_error(tanh_layer, x, {}, 16), 1e-8);
  AvgPool2d<double> pool(3, 2);
  EXPECT_LT(layer_gradient_error(pool, x, {}, 17), 1e-8);
  Dropout<double> drop(0.5, 3);
  EXPECT_LT(layer_gradient_error(drop, x, Context{true, 99}, 18), 1e-8);
}

TEST(Layers, ReflectionPadMatchesDefinition) {
  Tensor<double> x(1, 1, 3, 3);
  for (int i = 0; i < 9; ++i) x[i] = i;
  ReflectionPad2d<double> pad(1);
  const auto y = pad.forward(x, {});
  ASSERT_EQ(y.h(), 5);
  // first padded row mirrors input row 1: [4 3 4 5 4]
  const double expected[5] = {4, 3, 4, 5, 4};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(y(0, 0, 0, i), expected[i]);
}

TEST(Layers, DropoutInactiveAtInference) {
  Dropout<float> drop(0.5f, 1);
  const auto x = random_tensor<float>(1, 2, 4, 4, 9);
  EXPECT_EQ(drop.forward(x, Context{false, 1}), x);
  const auto a = drop.forward(x, Context{true, 1});
  const auto b = drop.forward(x, Context{true, 1});
  const auto c = drop.forward(x, Context{true, 2});
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
}

TEST(Layers, TanhNeverReachesOne) {
  Tensor<float> x(1, 1, 1, 4);
  x[0] = 50.0f;
  x[1] = -50.0f;
  x[2] = 1e30f;
  x[3] = 0.0f;
  Tanh<float> t;
  const auto y = t.forward(x, {});
  EXPECT_LT(y[0], 1.0f);
  EXPECT_GT(y[1], -1.0f);
  EXPECT_LT(y[2], 1.0f);
  EXPECT_EQ(y[3], 0.0f);
}

namespace {

GeneratorConfig tiny_generator(int in_channels) {
  GeneratorConfig g;
  g.in_channels = in_channels;
  g.base_width = 4;
  g.n_downsample = 2;
  g.n_resblocks = 1;
  return g;
}

DiscriminatorConfig tiny_discriminator(int in_channels) {
  DiscriminatorConfig d;
  d.in_channels = in_channels;
  d.base_width = 4;
  d.n_layers = 2;
  d.num_scales = 2;
  return d;
}

}  // namespace

TEST(Model, GeneratorGradient) {
  Generator<double> g(tiny_generator(2));
  auto params = g.parameters();
  Rng rng(3);
  for (auto* p : params) {
    for (auto& v : p->value.values()) v = rng.normal() * 0.3;
  }
  auto x = random_tensor<double>(1, 2, 8, 8, 21);
  const Context ctx{true, 5};
  const auto r = random_tensor<double>(1, 3, 8, 8, 22);
  zero_grad(params);
  g.forward(x, ctx);
  const auto gx = g.backward(r);
  std::vector<double> analytic(gx.values().begin(), gx.values().end());
  std::vector<double> flat(x.values().begin(), x.values().end());
  // A subset of the parameters keeps the check quick.
  auto* head = params.front();
  analytic.insert(analytic.end(), head->grad.values().begin(), head->grad.values().end());
  flat.insert(flat.end(), head->value.values().begin(), head->value.values().end());
  auto f = [&]() {
    std::size_t k = 0;
    for (auto& v : x.values()) v = flat[k++];
    for (auto& v : head->value.values()) v = flat[k++];
    return s2e::testing::dot(g.forward(x, ctx), r);
  };
  const auto numeric = s2e::testing::numeric_gradient(flat, f);
  EXPECT_LT(s2e::testing::relative_error(analytic, numeric), 1e-6);
}

TEST(Model, DiscriminatorGradientThroughFeaturesAndLogits) {
  MultiScaleDiscriminator<double> d(tiny_discriminator(2));
  Rng rng(4);
  for (auto* p : d.parameters()) {
    for (auto& v : p->value.values()) v = rng.normal() * 0.3;
  }
  auto x = random_tensor<double>(2, 2, 12, 12, 31);
  auto out = d.forward(x);
  // weights for every feature map and logit grid
  std::vector<ScaleGrad<double>> r(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t l = 0; l < out[k].features.size(); ++l) {
      const auto& f = out[k].features[l];
      r[k].features.push_back(random_tensor<double>(f.n(), f.c(), f.h(), f.w(), 100 + 10 * k + l));
    }
    const auto& lg = out[k].logits;
    r[k].logits = random_tensor<double>(lg.n(), lg.c(), lg.h(), lg.w(), 200 + k);
  }
  auto objective = [&](const DiscriminatorOutput<double>& o) {
    double s = 0.0;
    for (std::size_t k = 0; k < o.size(); ++k) {
      for (std::size_t l = 0; l < o[k].features.size(); ++l) {
        s += s2e::testing::dot(o[k].features[l], r[k].features[l]);
      }
      s += s2e::testing::dot(o[k].logits, r[k].logits);
    }
    return s;
  };
  zero_grad(d.parameters());
  d.forward(x);
  const auto gx = d.backward(r);
  std::vector<double> analytic(gx.values().begin(), gx.values().end());
  std::vector<double> flat(x.values().begin(), x.values().end());
  auto f = [&]() {
    std::size_t k = 0;
    for (auto& v : x.values()) v = flat[k++];
    return objective(d.forward(x));
  };
  const auto numeric = s2e::testing::numeric_gradient(flat, f);
  EXPECT_LT(s2e::testing::relative_error(analytic, numeric), 1e-6);
}

TEST(Model, GeneratorShapeAndRange) {
  GeneratorConfig cfg = tiny_generator(6);
  Generator<float> g(cfg);
  DiscriminatorConfig dcfg = tiny_discriminator(9);
  MultiScaleDiscriminator<float> d(dcfg);
  initialize_weights(g, d, 1);
  const auto x = random_tensor<float>(2, 6, 32, 32, 2);
  const auto y = g.forward(x, {});
  EXPECT_EQ(y.n(), 2);
  EXPECT_EQ(y.c(), 3);
  EXPECT_EQ(y.h(), 32);
  EXPECT_EQ(y.w(), 32);
  for (float v : y.values()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_EQ(g.forward(x, {}), y);
}

TEST(Model, GeneratorRejectsBadInput) {
  Generator<float> g(tiny_generator(6));
  const auto wrong_channels = random_tensor<float>(1, 5, 32, 32, 1);
  const auto wrong_size = random_tensor<float>(1, 6, 30, 30, 1);
  try {
    g.forward(wrong_channels, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  try {
    g.forward(wrong_size, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Model, DefaultGeneratorRejects250) {
  GeneratorConfig cfg;  // 4 downsamplings: 256 divides by 16, 250 does not
  try {
    Generator<float> g(cfg);
    g.check_input(6, 250, 250);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Model, ParameterCountMatchesConfig) {
  for (int n_down : {1, 2, 3}) {
    for (int base : {2, 4}) {
      GeneratorConfig cfg = tiny_generator(7);
      cfg.n_downsample = n_down;
      cfg.base_width = base;
      cfg.n_resblocks = 2;
      Generator<float> g(cfg);
      std::size_t count = 0;
      for (auto* p : g.parameters()) count += p->value.size();
      EXPECT_EQ(count, generator_parameter_count(cfg));
    }
  }
  DiscriminatorConfig dcfg = tiny_discriminator(5);
  dcfg.num_scales = 3;
  MultiScaleDiscriminator<float> d(dcfg);
  std::size_t count = 0;
  for (auto* p : d.parameters()) count += p->value.size();
  EXPECT_EQ(count, discriminator_parameter_count(dcfg));
}

// Regression guard against silent architecture drift of the defaults.
TEST(Model, DefaultParameterCounts) {
  EXPECT_EQ(generator_parameter_count(GeneratorConfig{}), 182452675u);
  EXPECT_EQ(discriminator_parameter_count(DiscriminatorConfig{}), 8312643u);
}

TEST(Model, DiscriminatorScaleGridSizes) {
  DiscriminatorConfig cfg;
  cfg.base_width = 4;
  MultiScaleDiscriminator<float> d(cfg);
  const auto x = random_tensor<float>(1, 9, 256, 256, 3);
  const auto out = d.forward(x);
  ASSERT_EQ(out.size(), 3u);
  // k4/pad2 stages: s2, s2, s2, s1, s1 -> 129, 65, 33, 34, 35 at 256
  EXPECT_EQ(out[0].logits.h(), 35);
  EXPECT_EQ(out[1].logits.h(), 19);
  EXPECT_EQ(out[2].logits.h(), 11);
  EXPECT_EQ(out[0].features.size(), 4u);
  const auto again = d.forward(x);
  EXPECT_EQ(again[2].logits, out[2].logits);
}

// Without instance norm each logit depends only on its receptive field.
TEST(Model, DiscriminatorLocality) {
  DiscriminatorConfig cfg = tiny_discriminator(3);
  cfg.num_scales = 1;
  cfg.n_layers = 3;
  cfg.instance_norm = false;
  MultiScaleDiscriminator<double> d(cfg);
  Generator<double> unused(tiny_generator(3));
  initialize_weights(unused, d, 8);
  auto x = random_tensor<double>(1, 3, 64, 64, 4);
  const auto before = d.forward(x)[0].logits;
  const int py = 40, px = 23;
  for (int c = 0; c < 3; ++c) x(0, c, py, px) = 0.0;
  const auto after = d.forward(x)[0].logits;
  // logit (i, j) reads input rows [8i - 46, 8i - 46 + rf)
  const int rf = patch_receptive_field(cfg);
  EXPECT_EQ(rf, 70);
  int changed = 0;
  for (int i = 0; i < before.h(); ++i) {
    for (int j = 0; j < before.w(); ++j) {
      const bool differs = before(0, 0, i, j) != after(0, 0, i, j);
      const int y0 = i * 8 - 46;
      const int x0 = j * 8 - 46;
      const bool inside = py >= y0 && py < y0 + rf && px >= x0 && px < x0 + rf;
      if (!inside) EXPECT_FALSE(differs) << i << "," << j;
      changed += differs;
    }
  }
  EXPECT_GT(changed, 0);
}

TEST(Optim, AdamMatchesClosedForm) {
  // f(w) = 0.5 * a * w^2, gradient a * w
  Parameter<double> p("w.weight", 1, 1, 1, 3);
  p.value[0] = 1.0;
  p.value[1] = -2.0;
  p.value[2] = 0.5;
  const double a[3] = {1.0, 3.0, 0.1};
  AdamConfig cfg;
  Adam<double> adam({&p}, cfg);
  double m[3] = {}, v[3] = {}, w[3] = {1.0, -2.0, 0.5};
  for (int t = 1; t <= 5; ++t) {
    p.ensure_grad();
    for (int i = 0; i < 3; ++i) p.grad[i] = a[i] * p.value[i];
    adam.step();
    for (int i = 0; i < 3; ++i) {
      const double g = a[i] * w[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
      EXPECT_NEAR(p.value[i], w[i], 1e-10);
    }
  }
}

// Forward values frozen from tests/oracles/layer_oracle.py (PyTorch, float64).
namespace {

Tensor<double> pattern_tensor(int n, int c, int h, int w, double (*f)(int)) {
  Tensor<double> t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = f(static_cast<int>(i));
  return t;
}

double pattern_x(int i) { return std::cos(0.23 * i); }
double pattern_w(int i) { return 0.5 * std::sin(0.37 * i + 0.1); }

void set_pattern(Layer<double>& layer) {
  for (auto* p : parameters_of(layer)) {
    const bool bias = p->name.ends_with(".bias");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] = bias ? 0.1 * static_cast<double>(i) - 0.05 : pattern_w(static_cast<int>(i));
    }
  }
}

void expect_checksums(const Tensor<double>& y, double sum, double probe_sum) {
  double s = 0.0, p = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += y[i];
    p += y[i] * std::cos(0.11 * static_cast<double>(i));
  }
  EXPECT_NEAR(s, sum, 1e-10 * std::max(1.0, std::abs(sum)));
  EXPECT_NEAR(p, probe_sum, 1e-10 * std::max(1.0, std::abs(probe_sum)));
}

}  // namespace

TEST(LayerOracle, MatchesReferenceForward) {
  const auto x = pattern_tensor(2, 3, 9, 8, pattern_x);
  {
    Conv2d<double> conv("a", 3, 4, 3, 2, 1);
    set_pattern(conv);
    const auto y = conv.forward(x, {});
    EXPECT_EQ(y.h(), 5);
    EXPECT_EQ(y.w(), 4);
    expect_checksums(y, 1.908456695969073e+00, -1.235308375427598e+00);
  }
  {
    Conv2d<double> conv("a", 3, 5, 4, 1, 2);
    set_pattern(conv);
    const auto y = conv.forward(x, {});
    EXPECT_EQ(y.h(), 10);
    EXPECT_EQ(y.w(), 9);
    expect_checksums(y, 1.393118798148108e+02, -9.137298322692901e+00);
  }
  {
    Sequential<double> seq;
    seq.add<ReflectionPad2d<double>>(3);
    seq.add<Conv2d<double>>("a", 3, 2, 7);
    set_pattern(seq);
    expect_checksums(seq.forward(x, {}), -3.609432491756366e+00, 2.297792498919722e+01);
  }
  {
    ConvTranspose2d<double> up("a", 3, 4, 3, 2, 1, 1);
    set_pattern(up);
    const auto y = up.forward(x, {});
    EXPECT_EQ(y.h(), 18);
    EXPECT_EQ(y.w(), 16);
    expect_checksums(y, 2.332477829171823e+02, 2.132190549549492e+00);
  }
  {
    InstanceNorm2d<double> norm;
    expect_checksums(norm.forward(x, {}), 0.0, 6.434106459258897e+00);
  }
  {
    Sequential<double> seq;
    seq.add<ReflectionPad2d<double>>(1);
    seq.add<AvgPool2d<double>>(3, 2);
    const auto y = seq.forward(x, {});
    EXPECT_EQ(y.h(), 5);
    EXPECT_EQ(y.w(), 4);
    expect_checksums(y, -1.772984042524199e+00, -9.296630894463112e+00);
  }
}
