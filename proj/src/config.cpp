#include "s2e/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "s2e/error.hpp"

namespace s2e {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}
std::string fmt(long long v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  fail(ErrorKind::config, key + ": '" + value + "' is not " + what);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class M>
Field real(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return fmt(static_cast<double>(member(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_double(k, v);
          }};
}

template <class M>
Field integer(std::string key, M member) {
  return {std::move(key),
          [member](const RunConfig& c) { return fmt(static_cast<long long>(member(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            using T = std::remove_reference_t<decltype(member(c))>;
            const long long x = to_int(k, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (x < 0) bad_value(k, v, "non-negative");
            }
            member(c) = static_cast<T>(x);
          }};
}

template <class M>
Field boolean(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return fmt(static_cast<bool>(member(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_bool(k, v);
          }};
}

template <class M>
Field text(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return std::string(member(c)); },
          [member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; }};
}

#define S2E_REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      integer("ingest.chip_size", S2E_REF(ingest.chip_size)),
      integer("ingest.stride", S2E_REF(ingest.chip_stride)),
      real("ingest.v_threshold", S2E_REF(ingest.v_mean_threshold)),
      real("ingest.occlusion_max", S2E_REF(ingest.occlusion_max_fraction)),
      real("ingest.split", S2E_REF(ingest.split_ratio)),
      integer("ingest.seed", S2E_REF(ingest.seed)),
      real("ingest.ratio_epsilon", S2E_REF(ingest.ratio_epsilon)),
      real("ingest.ratio_clip", S2E_REF(ingest.ratio_clip)),
      real("ingest.percentile_lo", S2E_REF(ingest.percentile_lo)),
      real("ingest.percentile_hi", S2E_REF(ingest.percentile_hi)),
      boolean("ingest.cloud_filter", S2E_REF(ingest.apply_cloud_filter)),

      integer("train.batch", S2E_REF(train.batch_size)),
      integer("train.epochs", S2E_REF(train.epochs)),
      real("train.lr", S2E_REF(train.lr)),
      real("train.beta1", S2E_REF(train.beta1)),
      real("train.beta2", S2E_REF(train.beta2)),
      integer("train.seed", S2E_REF(train.seed)),
      integer("train.checkpoint_every", S2E_REF(train.checkpoint_every)),
      {"train.conditioning",
       [](const RunConfig& c) { return conditioning_to_string(c.train.conditioning); },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.train.conditioning = parse_conditioning(v);
       }},
      integer("train.max_steps", S2E_REF(train.max_steps)),
      integer("train.lr_decay_start_epoch", S2E_REF(train.lr_decay_start_epoch)),
      boolean("train.freeze_discriminator", S2E_REF(train.freeze_discriminator)),
      boolean("train.log_wall_time", S2E_REF(train.log_wall_time)),

      {"loss.objective", [](const RunConfig& c) { return std::string(to_string(c.train.loss.objective)); },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.train.loss.objective = parse_objective(v);
       }},
      real("loss.lambda_fm", S2E_REF(train.loss.lambda_fm)),
      {"loss.adversarial_form",
       [](const RunConfig& c) { return std::string(to_string(c.train.loss.adversarial_form)); },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.train.loss.adversarial_form = parse_adversarial_form(v);
       }},
      boolean("loss.minimax_generator", S2E_REF(train.loss.minimax_generator)),

      integer("arch.g_base_width", S2E_REF(train.arch.g_base_width)),
      integer("arch.g_n_downsample", S2E_REF(train.arch.g_n_downsample)),
      integer("arch.g_n_resblocks", S2E_REF(train.arch.g_n_resblocks)),
      real("arch.g_dropout", S2E_REF(train.arch.g_dropout)),
      integer("arch.d_num_scales", S2E_REF(train.arch.d_num_scales)),
      integer("arch.d_base_width", S2E_REF(train.arch.d_base_width)),
      integer("arch.d_n_layers", S2E_REF(train.arch.d_n_layers)),
      boolean("arch.d_instance_norm", S2E_REF(train.arch.d_instance_norm)),

      text("eval.lpips_weights", S2E_REF(eval.lpips_weights)),
      integer("eval.figure_rows", S2E_REF(eval.figure_rows)),

      text("osm.server", S2E_REF(osm.server)),
      text("osm.user_agent", S2E_REF(osm.user_agent)),
      integer("osm.zoom", S2E_REF(osm.zoom)),
      boolean("osm.blank_missing", S2E_REF(osm.blank_missing)),
      integer("osm.max_retries", S2E_REF(osm.max_retries)),
      integer("osm.min_interval_ms", S2E_REF(osm.min_interval_ms)),

      integer("synth.n", S2E_REF(synth.n_scenes)),
      integer("synth.seed", S2E_REF(synth.scene.seed)),
      integer("synth.size", S2E_REF(synth.scene.size)),
      integer("synth.n_shapes", S2E_REF(synth.scene.n_shapes)),
      real("synth.speckle", S2E_REF(synth.scene.speckle_strength)),
      integer("synth.misalign", S2E_REF(synth.scene.misalignment)),
      real("synth.ground_resolution", S2E_REF(synth.scene.ground_resolution)),
      real("synth.split", S2E_REF(synth.corpus.split_ratio)),
      integer("synth.split_seed", S2E_REF(synth.corpus.split_seed)),
      integer("synth.chip_size", S2E_REF(synth.corpus.chip_size)),
      text("synth.dataset_name", S2E_REF(synth.corpus.dataset_name)),
  };
  return all;
}

#undef S2E_REF

const Field& find(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  find(key).set(*this, key, trim(value));
  assigned.insert(key);
}

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::config, origin + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::config, origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / kResolvedConfigName, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + (dir / kResolvedConfigName).string());
  out << resolved();
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

}  // namespace s2e
