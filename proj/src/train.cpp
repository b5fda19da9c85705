#include "s2e/train.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "s2e/error.hpp"
#include "s2e/rng.hpp"

namespace s2e {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorKind::config, "epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::config, "lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail(ErrorKind::config, "beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorKind::config, "beta2 must lie in [0, 1)");
  if (checkpoint_every < 0) fail(ErrorKind::config, "checkpoint_every must be >= 0");
  loss.validate(conditioning);
}

TrainConfig TrainConfig::reference() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.checkpoint_every = 1;
  cfg.arch.g_base_width = 16;
  cfg.arch.g_n_downsample = 3;
  cfg.arch.g_n_resblocks = 3;
  cfg.arch.d_base_width = 16;
  return cfg;
}

GeneratorConfig generator_config(const TrainConfig& cfg, ModalityKind sar_kind) {
  GeneratorConfig g;
  g.in_channels = generator_input_channels(cfg.loss.objective, channel_count(sar_kind),
                                           cfg.conditioning);
  g.out_channels = 3;
  g.base_width = cfg.arch.g_base_width;
  g.n_downsample = cfg.arch.g_n_downsample;
  g.n_resblocks = cfg.arch.g_n_resblocks;
  g.dropout_rate = cfg.arch.g_dropout;
  return g;
}

DiscriminatorConfig discriminator_config(const TrainConfig& cfg, ModalityKind sar_kind) {
  DiscriminatorConfig d;
  d.in_channels = discriminator_input_channels(cfg.loss.objective, channel_count(sar_kind),
                                               cfg.conditioning);
  d.num_scales = cfg.arch.d_num_scales;
  d.base_width = cfg.arch.d_base_width;
  d.n_layers = cfg.arch.d_n_layers;
  d.instance_norm = cfg.arch.d_instance_norm;
  return d;
}

ModelBundle ModelBundle::create(const TrainConfig& config, ModalityKind sar_kind) {
  config.validate();
  if (sar_kind != ModalityKind::sar_dual_pol && sar_kind != ModalityKind::sar_quad_pol) {
    fail(ErrorKind::modality, "bundle SAR kind must be dual- or quad-pol");
  }
  ModelBundle b;
  b.config = config;
  b.sar_kind = sar_kind;
  b.generator = std::make_unique<Generator<float>>(generator_config(config, sar_kind));
  b.discriminator =
      std::make_unique<MultiScaleDiscriminator<float>>(discriminator_config(config, sar_kind));
  initialize_weights(*b.generator, *b.discriminator, config.seed);
  const AdamConfig adam{config.lr, config.beta1, config.beta2, 1e-8};
  b.g_optimizer = std::make_unique<Adam<float>>(b.generator->parameters(), adam);
  b.d_optimizer = std::make_unique<Adam<float>>(b.discriminator->parameters(), adam);
  return b;
}

int ModelBundle::generator_channels() const { return generator->config().in_channels; }

// ---------------------------------------------------------------- logging

std::string format_log_line(const StepReport& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["d_loss"] = r.d_loss;
  j["g_adv"] = r.g_adv;
  j["g_fm"] = r.g_fm;
  j["g_total"] = r.g_total;
  j["l1_monitor"] = r.l1_monitor;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

StepReport parse_log_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    StepReport r;
    r.step = j.at("step").get<std::uint64_t>();
    r.epoch = j.at("epoch").get<std::uint64_t>();
    r.d_loss = j.at("d_loss").get<double>();
    r.g_adv = j.at("g_adv").get<double>();
    r.g_fm = j.at("g_fm").get<double>();
    r.g_total = j.at("g_total").get<double>();
    r.l1_monitor = j.at("l1_monitor").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("bad log line: ") + e.what());
  }
}

// ------------------------------------------------------------- train step

namespace {

// Rows [first, first + count) of every scale.
std::vector<nn::Tensor<float>> batch_rows(const std::vector<nn::Tensor<float>>& t, int first,
                                          int count) {
  std::vector<nn::Tensor<float>> out;
  for (const auto& s : t) out.push_back(nn::slice_batch(s, first, count));
  return out;
}

bool all_finite(const nn::Tensor<float>& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace

StepReport train_step(ModelBundle& bundle, const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                      std::uint64_t step) {
  const TrainConfig& cfg = bundle.config;
  const LossConfig& loss = cfg.loss;
  auto& G = *bundle.generator;
  auto& D = *bundle.discriminator;
  if (x.n() != y.n() || y.c() != 3 || x.h() != y.h() || x.w() != y.w()) {
    fail(ErrorKind::dimension, "train_step: input " + x.shape_string() + " and target " +
                                   y.shape_string() + " do not pair up");
  }
  const int n = x.n();

  // G forward once; dropout and noise are pure functions of (seed, step).
  const nn::Context g_ctx{true, derive_seed(cfg.seed, step, 1)};
  const auto g_in = generator_input(loss.objective, x, derive_seed(cfg.seed, step, 2));
  const auto fake = G.forward(g_in, g_ctx);
  if (!all_finite(fake)) fail(ErrorKind::numeric, "generator produced non-finite output");

  StepReport report;
  report.step = step;
  {
    double l1 = 0.0;
    for (std::size_t i = 0; i < fake.size(); ++i) l1 += std::abs(fake[i] - y[i]);
    report.l1_monitor = l1 / static_cast<double>(fake.size());
  }

  const auto d_real_in = discriminator_input(loss.objective, x, y);
  const auto d_fake_in = discriminator_input(loss.objective, x, fake);

  // Discriminator: real and fake halves in one batch (instance norm is per
  // sample, so this equals two separate passes).
  {
    const auto out = D.forward(nn::concat_batch(d_real_in, d_fake_in));
    const auto logits = logits_of(out);
    const auto dl = d_loss(batch_rows(logits, 0, n), batch_rows(logits, n, n), loss);
    report.d_loss = dl.value;
    if (!cfg.freeze_discriminator) {
      std::vector<ScaleGrad<float>> grads(out.size());
      for (std::size_t k = 0; k < out.size(); ++k) {
        grads[k].logits = nn::concat_batch(dl.grad_real[k], dl.grad_fake[k]);
      }
      nn::zero_grad(D.parameters());
      D.backward(grads);
      bundle.d_optimizer->step();
    }
  }

  // Generator through the (updated) discriminator. Real features are
  // constants; only the fake pass is back-propagated.
  {
    const auto real_out = D.forward(d_real_in);
    const auto real_feats = features_of(real_out);
    const auto fake_out = D.forward(d_fake_in);
    const auto adv = g_adv_loss(logits_of(fake_out), loss);
    const auto fm = feature_matching_loss(real_feats, features_of(fake_out));
    report.g_adv = adv.value;
    report.g_fm = fm.value;
    report.g_total = total_g_loss(adv.value, fm.value, loss);
    if (!std::isfinite(report.g_total) || !std::isfinite(report.d_loss)) {
      fail(ErrorKind::numeric, "non-finite loss at step " + std::to_string(step));
    }
    std::vector<ScaleGrad<float>> grads(fake_out.size());
    const auto lambda = static_cast<float>(loss.lambda_fm);
    for (std::size_t k = 0; k < fake_out.size(); ++k) {
      grads[k].logits = adv.grad_fake[k];
      if (lambda != 0.0f) {
        for (auto g : fm.grad_fake[k]) {
          for (auto& v : g.values()) v *= lambda;
          grads[k].features.push_back(std::move(g));
        }
      }
    }
    const auto d_in_grad = D.backward(grads);
    const auto g_out_grad = loss.objective == Objective::gan_eq1
                                ? d_in_grad
                                : nn::slice_channels(d_in_grad, x.c(), 3);
    nn::zero_grad(G.parameters());
    G.backward(g_out_grad);
    bundle.g_optimizer->step();
  }
  bundle.step = step + 1;
  return report;
}

nn::Tensor<float> conditioned_input(const Sample& sample, const Conditioning& conditioning) {
  if (sample.conditions.size() != conditioning.size()) {
    fail(ErrorKind::config, "sample " + sample.id + " carries " +
                                std::to_string(sample.conditions.size()) +
                                " conditions, expected " + conditioning_to_string(conditioning));
  }
  for (std::size_t i = 0; i < conditioning.size(); ++i) {
    if (sample.conditions[i].first.kind != conditioning[i]) {
      fail(ErrorKind::config, "sample " + sample.id + " conditioning order differs from " +
                                  conditioning_to_string(conditioning));
    }
  }
  const auto chips = sample.condition_chips();
  const RasterChip joint = concat_conditioning(sample.sar, chips);
  return chips_to_tensor<float>(std::span<const RasterChip>(&joint, 1));
}

StepReport train_step(ModelBundle& bundle, const std::vector<Sample>& batch) {
  if (batch.empty()) fail(ErrorKind::empty_corpus, "empty batch");
  std::vector<nn::Tensor<float>> xs, ys;
  for (const auto& s : batch) {
    xs.push_back(conditioned_input(s, bundle.config.conditioning));
    ys.push_back(chips_to_tensor<float>(std::span<const RasterChip>(&s.target_eo, 1)));
  }
  nn::Tensor<float> x = xs[0], y = ys[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    x = nn::concat_batch(x, xs[i]);
    y = nn::concat_batch(y, ys[i]);
  }
  return train_step(bundle, x, y, bundle.step);
}

TrainData load_split(const Manifest& manifest, Split split, const Conditioning& conditioning) {
  TrainData data;
  for (const ManifestEntry* e : manifest.entries(split)) {
    const Sample s = load_sample(manifest, *e, conditioning);
    data.ids.push_back(s.id);
    data.inputs.push_back(conditioned_input(s, conditioning));
    data.targets.push_back(chips_to_tensor<float>(std::span<const RasterChip>(&s.target_eo, 1)));
  }
  return data;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x65706f6368ULL, epoch));  // "epoch"
  shuffle(order, rng);
  return order;
}

// ------------------------------------------------------------- checkpoint

namespace {

json arch_to_json(const ArchitectureConfig& a) {
  json j;
  j["g_base_width"] = a.g_base_width;
  j["g_n_downsample"] = a.g_n_downsample;
  j["g_n_resblocks"] = a.g_n_resblocks;
  j["g_dropout"] = a.g_dropout;
  j["d_num_scales"] = a.d_num_scales;
  j["d_base_width"] = a.d_base_width;
  j["d_n_layers"] = a.d_n_layers;
  j["d_instance_norm"] = a.d_instance_norm;
  return j;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["conditioning"] = conditioning_to_string(c.conditioning);
  j["objective"] = to_string(c.loss.objective);
  j["lambda_fm"] = c.loss.lambda_fm;
  j["adversarial_form"] = to_string(c.loss.adversarial_form);
  j["minimax_generator"] = c.loss.minimax_generator;
  j["arch"] = arch_to_json(c.arch);
  j["max_steps"] = c.max_steps;
  j["lr_decay_start_epoch"] = c.lr_decay_start_epoch;
  j["freeze_discriminator"] = c.freeze_discriminator;
  j["log_wall_time"] = c.log_wall_time;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.conditioning = parse_conditioning(j.at("conditioning").get<std::string>());
  c.loss.objective = parse_objective(j.at("objective").get<std::string>());
  c.loss.lambda_fm = j.at("lambda_fm").get<double>();
  c.loss.adversarial_form = parse_adversarial_form(j.at("adversarial_form").get<std::string>());
  c.loss.minimax_generator = j.at("minimax_generator").get<bool>();
  const auto& a = j.at("arch");
  c.arch.g_base_width = a.at("g_base_width").get<int>();
  c.arch.g_n_downsample = a.at("g_n_downsample").get<int>();
  c.arch.g_n_resblocks = a.at("g_n_resblocks").get<int>();
  c.arch.g_dropout = a.at("g_dropout").get<double>();
  c.arch.d_num_scales = a.at("d_num_scales").get<int>();
  c.arch.d_base_width = a.at("d_base_width").get<int>();
  c.arch.d_n_layers = a.at("d_n_layers").get<int>();
  c.arch.d_instance_norm = a.at("d_instance_norm").get<bool>();
  c.max_steps = j.at("max_steps").get<std::uint64_t>();
  c.lr_decay_start_epoch = j.at("lr_decay_start_epoch").get<int>();
  c.freeze_discriminator = j.at("freeze_discriminator").get<bool>();
  c.log_wall_time = j.at("log_wall_time").get<bool>();
  return c;
}

struct NamedTensor {
  std::string name;
  nn::Tensor<float>* tensor;
};

std::vector<NamedTensor> bundle_tensors(const ModelBundle& b) {
  std::vector<NamedTensor> out;
  auto add_params = [&](const std::vector<nn::Parameter<float>*>& params) {
    for (auto* p : params) out.push_back({p->name, &p->value});
  };
  auto add_moments = [&](Adam<float>& opt, const std::string& tag) {
    const auto& params = opt.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back({"adam." + tag + ".m." + params[i]->name, &opt.first_moments()[i]});
      out.push_back({"adam." + tag + ".v." + params[i]->name, &opt.second_moments()[i]});
    }
  };
  add_params(b.generator->parameters());
  add_params(b.discriminator->parameters());
  add_moments(*b.g_optimizer, "G");
  add_moments(*b.d_optimizer, "D");
  return out;
}

template <class V>
void put(std::string& buf, V v) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &v, sizeof(V));
  buf.append(bytes, sizeof(V));
}

template <class V>
V get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(V) > buf.size()) fail(ErrorKind::integrity, "bundle is truncated");
  V v;
  std::memcpy(&v, buf.data() + pos, sizeof(V));
  pos += sizeof(V);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ParsedBundle {
  BundleHeader header;
  std::size_t payload_pos = 0;
};

// Verifies magic, version and CRC, then decodes the header.
ParsedBundle parse_bundle(const std::string& buf, const std::filesystem::path& path) {
  if (buf.size() < 8 + 4 + 8 + 4 || std::memcmp(buf.data(), kBundleMagic, 8) != 0) {
    fail(ErrorKind::integrity, path.string() + " is not a model bundle");
  }
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  const auto actual = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body)));
  if (stored != actual) fail(ErrorKind::integrity, path.string() + " failed its CRC check");

  ParsedBundle p;
  std::size_t pos = 8;
  p.header.version = get<std::uint32_t>(buf, pos);
  if (p.header.version != kBundleVersion) {
    fail(ErrorKind::integrity, "unsupported bundle version " + std::to_string(p.header.version));
  }
  const auto header_len = get<std::uint64_t>(buf, pos);
  if (pos + header_len > body) fail(ErrorKind::integrity, "bundle header overruns the file");
  try {
    const auto j = json::parse(buf.substr(pos, header_len));
    p.header.config = config_from_json(j.at("train_config"));
    p.header.sar_kind = parse_modality(j.at("sar_kind").get<std::string>());
    p.header.step = j.at("step").get<std::uint64_t>();
    p.header.epoch = j.at("epoch").get<std::uint64_t>();
    p.header.g_optimizer_steps = j.at("g_optimizer_steps").get<std::uint64_t>();
    p.header.d_optimizer_steps = j.at("d_optimizer_steps").get<std::uint64_t>();
    for (const auto& t : j.at("tensors")) {
      TensorRecord r;
      r.name = t.at("name").get<std::string>();
      r.shape = t.at("shape").get<std::vector<int>>();
      r.offset = t.at("offset").get<std::uint64_t>();
      r.count = t.at("count").get<std::uint64_t>();
      p.header.tensors.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("bundle header is malformed: ") + e.what());
  }
  p.payload_pos = pos + header_len;
  std::uint64_t floats = 0;
  for (const auto& r : p.header.tensors) floats = std::max(floats, r.offset + r.count);
  if (p.payload_pos + floats * 4 != body) {
    fail(ErrorKind::integrity, "bundle payload size does not match its tensor table");
  }
  return p;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_to_json(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("bad train config: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto tensors = bundle_tensors(bundle);
  json header;
  header["format"] = "sar2eo-bundle";
  header["train_config"] = config_to_json(bundle.config);
  header["sar_kind"] = to_string(bundle.sar_kind);
  header["step"] = bundle.step;
  header["epoch"] = bundle.epoch;
  header["g_optimizer_steps"] = bundle.g_optimizer->steps();
  header["d_optimizer_steps"] = bundle.d_optimizer->steps();
  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    json r;
    r["name"] = t.name;
    r["shape"] = {t.tensor->n(), t.tensor->c(), t.tensor->h(), t.tensor->w()};
    r["offset"] = offset;
    r["count"] = t.tensor->size();
    offset += t.tensor->size();
    table.push_back(std::move(r));
  }
  header["tensors"] = std::move(table);
  const std::string header_text = header.dump();

  std::string buf(kBundleMagic, 8);
  put<std::uint32_t>(buf, kBundleVersion);
  put<std::uint64_t>(buf, header_text.size());
  buf += header_text;
  buf.reserve(buf.size() + offset * 4 + 4);
  for (const auto& t : tensors) {
    buf.append(reinterpret_cast<const char*>(t.tensor->data()), t.tensor->size() * sizeof(float));
  }
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(crc32(
                              0L, reinterpret_cast<const Bytef*>(buf.data()),
                              static_cast<uInt>(buf.size()))));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

BundleHeader read_bundle_header(const std::filesystem::path& path) {
  return parse_bundle(read_file(path), path).header;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  const ParsedBundle parsed = parse_bundle(buf, path);
  const BundleHeader& h = parsed.header;
  ModelBundle b = ModelBundle::create(h.config, h.sar_kind);
  b.step = h.step;
  b.epoch = h.epoch;
  b.g_optimizer->set_steps(h.g_optimizer_steps);
  b.d_optimizer->set_steps(h.d_optimizer_steps);
  const auto tensors = bundle_tensors(b);
  if (tensors.size() != h.tensors.size()) {
    fail(ErrorKind::integrity, "bundle tensor count does not match its config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& rec = h.tensors[i];
    auto* t = tensors[i].tensor;
    const std::vector<int> shape{t->n(), t->c(), t->h(), t->w()};
    if (rec.name != tensors[i].name || rec.shape != shape || rec.count != t->size()) {
      fail(ErrorKind::integrity, "bundle tensor '" + rec.name + "' does not match the model");
    }
    std::memcpy(t->data(), buf.data() + parsed.payload_pos + rec.offset * 4, rec.count * 4);
  }
  return b;
}

// -------------------------------------------------------------------- fit

namespace {

double decayed_lr(const TrainConfig& cfg, std::uint64_t epoch) {
  if (cfg.lr_decay_start_epoch < 0 || static_cast<int>(epoch) < cfg.lr_decay_start_epoch) {
    return cfg.lr;
  }
  const double span = std::max(1, cfg.epochs - cfg.lr_decay_start_epoch);
  const double done = static_cast<double>(epoch) - cfg.lr_decay_start_epoch;
  return cfg.lr * std::max(0.0, 1.0 - done / span);
}

// Keeps log lines up to and including `last_step`; used when resuming.
void truncate_log(const std::filesystem::path& path, std::uint64_t steps_done) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (parse_log_line(line).step < steps_done) kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept;
}

void write_nan_dump(const std::filesystem::path& out_dir, std::uint64_t step, std::uint64_t epoch,
                    const std::vector<std::string>& ids, const std::string& what) {
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["batch_ids"] = ids;
  j["error"] = what;
  std::ofstream out(out_dir / "nan_dump.json", std::ios::trunc);
  out << j.dump(2) << "\n";
}

}  // namespace

ModelBundle fit(const Manifest& manifest, const TrainConfig& cfg,
                const std::filesystem::path& out_dir, const FitOptions& options) {
  cfg.validate();
  const TrainData data = load_split(manifest, Split::train, cfg.conditioning);
  if (data.size() == 0) fail(ErrorKind::empty_corpus, "the manifest has no training samples");

  ModelBundle bundle;
  if (options.resume_from) {
    bundle = load_bundle(*options.resume_from);
    if (bundle.config.conditioning != cfg.conditioning || bundle.config.arch != cfg.arch ||
        bundle.config.loss != cfg.loss || bundle.config.seed != cfg.seed ||
        bundle.config.batch_size != cfg.batch_size || bundle.sar_kind != manifest.sar_kind) {
      fail(ErrorKind::config, "checkpoint was trained with a different configuration");
    }
    // Schedule fields (epochs, max_steps, checkpointing) may change on resume.
    bundle.config = cfg;
  } else {
    bundle = ModelBundle::create(cfg, manifest.sar_kind);
  }

  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / kTrainLogName;
  if (options.resume_from) {
    truncate_log(log_path, bundle.step);
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }
  std::ofstream log(log_path, std::ios::app);
  if (!log) fail(ErrorKind::io, "cannot write " + log_path.string());

  const std::size_t n = data.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::uint64_t total_samples = static_cast<std::uint64_t>(cfg.epochs) * n;
  std::uint64_t total_steps = (total_samples + batch - 1) / batch;
  if (cfg.max_steps > 0) total_steps = std::min<std::uint64_t>(total_steps, cfg.max_steps);

  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> order;
  const auto start = std::chrono::steady_clock::now();

  while (bundle.step < total_steps) {
    const std::uint64_t step = bundle.step;
    const std::uint64_t first = step * batch;
    const std::uint64_t epoch = first / n;
    const double lr = decayed_lr(cfg, epoch);
    bundle.g_optimizer->set_lr(lr);
    bundle.d_optimizer->set_lr(lr);

    std::vector<std::string> ids;
    nn::Tensor<float> x, y;
    for (std::uint64_t pos = first; pos < first + batch; ++pos) {
      const std::uint64_t e = pos / n;
      if (e != cached_epoch) {
        order = epoch_order(n, cfg.seed, e);
        cached_epoch = e;
      }
      const std::size_t idx = order[pos % n];
      ids.push_back(data.ids[idx]);
      x = x.empty() ? data.inputs[idx] : nn::concat_batch(x, data.inputs[idx]);
      y = y.empty() ? data.targets[idx] : nn::concat_batch(y, data.targets[idx]);
    }

    StepReport report;
    try {
      report = train_step(bundle, x, y, step);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) {
        write_nan_dump(out_dir, step, epoch, ids, e.what());
        fail(ErrorKind::numeric, std::string(e.what()) + " (batch ids written to nan_dump.json)");
      }
      throw;
    }
    report.epoch = epoch;
    if (cfg.log_wall_time) {
      report.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start).count();
    }
    log << format_log_line(report) << "\n";
    log.flush();
    if (options.on_step) options.on_step(report);

    const std::uint64_t epochs_done = (bundle.step * batch) / n;
    if (epochs_done > bundle.epoch) {
      bundle.epoch = epochs_done;
      if (cfg.checkpoint_every > 0 && epochs_done % cfg.checkpoint_every == 0 &&
          bundle.step < total_steps) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04llu.s2eb",
                      static_cast<unsigned long long>(epochs_done));
        save_bundle(bundle, out_dir / "checkpoints" / name);
      }
    }
  }
  save_bundle(bundle, out_dir / kBundleFileName);
  return bundle;
}

}  // namespace s2e
