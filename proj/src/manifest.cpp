#include "s2e/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "s2e/chip_io.hpp"
#include "s2e/error.hpp"
#include "s2e/rng.hpp"

namespace s2e {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestFormat = "sar2eo-manifest";
constexpr int kManifestVersion = 1;

}  // namespace

std::vector<const ManifestEntry*> Manifest::entries(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& entry : samples) {
    if (entry.split == split) out.push_back(&entry);
  }
  return out;
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [&](const auto& e) { return e.split == split; }));
}

void Manifest::validate() const {
  std::map<std::string, Split> owner;
  for (const auto& entry : samples) {
    auto [it, inserted] = owner.emplace(entry.source_id, entry.split);
    if (!inserted && it->second != entry.split) {
      fail(ErrorKind::validation,
           "source '" + entry.source_id + "' contributes to both train and test splits");
    }
  }
}

std::string serialize_manifest(const Manifest& manifest) {
  std::ostringstream out;
  ojson header;
  header["format"] = kManifestFormat;
  header["version"] = kManifestVersion;
  header["dataset"] = manifest.dataset_name;
  header["seed"] = manifest.seed;
  header["split_ratio"] = manifest.split_ratio;
  header["sar_modality"] = to_string(manifest.sar_kind);
  ojson bounds = ojson::array();
  for (const auto& b : manifest.sar_bounds) bounds.push_back({b.lo, b.hi});
  header["sar_bounds"] = bounds;
  out << header.dump() << '\n';
  for (const auto& entry : manifest.samples) {
    ojson line;
    line["id"] = entry.id;
    line["source_id"] = entry.source_id;
    line["split"] = to_string(entry.split);
    ojson paths = ojson::object();
    paths["sar"] = entry.paths.sar;
    paths["eo"] = entry.paths.eo;
    if (!entry.paths.map.empty()) paths["map"] = entry.paths.map;
    if (!entry.paths.ir.empty()) paths["ir"] = entry.paths.ir;
    line["paths"] = paths;
    line["lat"] = entry.lat;
    line["lon"] = entry.lon;
    out << line.dump() << '\n';
  }
  return out.str();
}

Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  Manifest manifest;
  manifest.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto record = ojson::parse(line);
      if (line_no == 1) {
        if (record.value("format", "") != kManifestFormat) {
          fail(ErrorKind::validation, "not a manifest (missing format header)");
        }
        if (record.at("version").get<int>() != kManifestVersion) {
          fail(ErrorKind::validation, "unsupported manifest version");
        }
        manifest.dataset_name = record.at("dataset").get<std::string>();
        manifest.seed = record.at("seed").get<std::uint64_t>();
        manifest.split_ratio = record.at("split_ratio").get<double>();
        manifest.sar_kind = parse_modality(record.at("sar_modality").get<std::string>());
        for (const auto& b : record.at("sar_bounds")) {
          manifest.sar_bounds.push_back({b.at(0).get<float>(), b.at(1).get<float>()});
        }
        continue;
      }
      ManifestEntry entry;
      entry.id = record.at("id").get<std::string>();
      entry.source_id = record.at("source_id").get<std::string>();
      entry.split = parse_split(record.at("split").get<std::string>());
      const auto& paths = record.at("paths");
      entry.paths.sar = paths.at("sar").get<std::string>();
      entry.paths.eo = paths.at("eo").get<std::string>();
      entry.paths.map = paths.value("map", "");
      entry.paths.ir = paths.value("ir", "");
      entry.lat = record.at("lat").get<double>();
      entry.lon = record.at("lon").get<double>();
      manifest.samples.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation,
         "malformed manifest line " + std::to_string(line_no) + ": " + e.what());
  }
  if (line_no == 0) fail(ErrorKind::validation, "empty manifest");
  manifest.validate();
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write manifest " + path.string());
    out << serialize_manifest(manifest);
    if (!out) fail(ErrorKind::io, "short write on manifest " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.parent_path());
}

Sample load_sample(const Manifest& manifest, const ManifestEntry& entry,
                   const Conditioning& conditioning) {
  Sample sample;
  sample.id = entry.id;
  sample.source_id = entry.source_id;
  sample.split = entry.split;
  sample.sar = read_chip(manifest.base_dir / entry.paths.sar);
  sample.target_eo = read_chip(manifest.base_dir / entry.paths.eo);
  for (auto kind : conditioning) {
    switch (kind) {
      case ModalityKind::map_rgb:
        if (entry.paths.map.empty()) {
          fail(ErrorKind::modality, "sample " + entry.id + " has no map chip");
        }
        sample.conditions.push_back({{kind}, read_chip(manifest.base_dir / entry.paths.map)});
        break;
      case ModalityKind::ir_single:
        if (entry.paths.ir.empty()) {
          fail(ErrorKind::modality, "sample " + entry.id + " has no IR chip");
        }
        sample.conditions.push_back({{kind}, read_chip(manifest.base_dir / entry.paths.ir)});
        break;
      case ModalityKind::latlon_planes:
        sample.conditions.push_back(
            {{kind}, latlon_to_planes(entry.lat, entry.lon, sample.sar.height(),
                                      sample.sar.width())});
        break;
      default:
        fail(ErrorKind::modality,
             std::string("modality ") + to_string(kind) + " is not a conditioning input");
    }
  }
  sample.validate();
  return sample;
}

std::set<std::string> assign_train_sources(
    const std::vector<std::pair<std::string, std::size_t>>& sample_counts, double ratio,
    std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::config, "split ratio must be in (0,1)");
  std::vector<std::pair<std::string, std::size_t>> sources = sample_counts;
  std::sort(sources.begin(), sources.end());
  Rng rng(derive_seed(seed, 0x73706c6974ULL));  // "split"
  shuffle(sources, rng);

  std::size_t total = 0;
  for (const auto& s : sources) total += s.second;
  const double target = ratio * static_cast<double>(total);

  const std::size_t n = sources.size();
  std::set<std::string> train;
  if (n < 2) {
    for (const auto& s : sources) train.insert(s.first);
    return train;
  }

  // Best prefix of the shuffled order.
  std::size_t best_k = 1;
  double best_err = INFINITY;
  std::size_t cumulative = 0;
  for (std::size_t k = 1; k < n; ++k) {
    cumulative += sources[k - 1].second;
    const double err = std::abs(static_cast<double>(cumulative) - target);
    if (err < best_err) {
      best_err = err;
      best_k = k;
    }
  }
  if (best_err <= 1.0 + 1e-9) {
    for (std::size_t k = 0; k < best_k; ++k) train.insert(sources[k].first);
    return train;
  }

  // Sources of uneven size: subset sum over the shuffled order. first[s] is
  // the earliest source that completes sum s, which makes the backtrack
  // unique and keeps the choice seeded.
  constexpr std::uint32_t kUnset = ~0u;
  std::vector<std::uint32_t> first(total + 1, kUnset);
  std::vector<char> reachable(total + 1, 0);
  reachable[0] = 1;
  std::size_t reach_max = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = sources[i].second;
    if (c == 0) continue;
    for (std::size_t s = std::min(total, reach_max + c); s >= c; --s) {
      if (!reachable[s] && reachable[s - c]) {
        reachable[s] = 1;
        first[s] = static_cast<std::uint32_t>(i);
      }
    }
    reach_max = std::min(total, reach_max + c);
  }
  std::size_t best_sum = 0;
  double best_gap = INFINITY;
  for (std::size_t s = 1; s < total; ++s) {
    const double gap = std::abs(static_cast<double>(s) - target);
    if (reachable[s] && gap < best_gap) {
      best_gap = gap;
      best_sum = s;
    }
  }
  if (best_gap >= best_err) {
    for (std::size_t k = 0; k < best_k; ++k) train.insert(sources[k].first);
    return train;
  }
  for (std::size_t s = best_sum; s > 0;) {
    const std::uint32_t i = first[s];
    train.insert(sources[i].first);
    s -= sources[i].second;
  }
  return train;
}

}  // namespace s2e
