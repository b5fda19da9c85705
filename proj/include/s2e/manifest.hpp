#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "s2e/core.hpp"

namespace s2e {

// Per-channel clip bounds used to map raw SAR into [-1, 1].
struct ChannelBounds {
  float lo = 0.0f;
  float hi = 0.0f;
  bool operator==(const ChannelBounds&) const = default;
};

// Chip file paths, relative to the manifest directory. Empty means absent.
struct ModalityPaths {
  std::string sar;
  std::string eo;
  std::string map;
  std::string ir;
  bool operator==(const ModalityPaths&) const = default;
};

struct ManifestEntry {
  std::string id;
  std::string source_id;
  Split split = Split::train;
  ModalityPaths paths;
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const ManifestEntry&) const = default;
};

/// Ordered, seeded, split-labelled index of samples.
///
/// Serialized as line-delimited JSON: a header record followed by one record
/// per sample with the fixed field order id, source_id, split, paths
/// (sar, eo, map, ir), lat, lon.
struct Manifest {
  std::string dataset_name;
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  ModalityKind sar_kind = ModalityKind::sar_dual_pol;
  std::vector<ChannelBounds> sar_bounds;
  std::vector<ManifestEntry> samples;

  // Directory the relative paths resolve against; not serialized.
  std::filesystem::path base_dir;

  std::vector<const ManifestEntry*> entries(Split split) const;
  std::size_t count(Split split) const;

  /// Checks that no source_id appears in both splits.
  void validate() const;

  bool operator==(const Manifest& other) const {
    return dataset_name == other.dataset_name && seed == other.seed &&
           split_ratio == other.split_ratio && sar_kind == other.sar_kind &&
           sar_bounds == other.sar_bounds && samples == other.samples;
  }
};

std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Loads the chips of one entry. Map and IR conditions come from their chip
/// files; lat/lon planes are synthesized from the entry coordinates.
Sample load_sample(const Manifest& manifest, const ManifestEntry& entry,
                   const Conditioning& conditioning);

/// Assigns whole source scenes to the train split.
///
/// Sources are shuffled with the seeded generator, then the shuffled prefix
/// whose sample count is closest to ratio * total becomes the training set.
/// With two or more sources both splits are non-empty.
std::set<std::string> assign_train_sources(
    const std::vector<std::pair<std::string, std::size_t>>& sample_counts, double ratio,
    std::uint64_t seed);

}  // namespace s2e
