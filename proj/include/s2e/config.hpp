#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "s2e/ingest.hpp"
#include "s2e/synthgen.hpp"
#include "s2e/train.hpp"

namespace s2e {

struct EvalSettings {
  std::string lpips_weights = "test-backbone";
  int figure_rows = 6;
};

struct OsmSettings {
  std::string server = "https://tile.openstreetmap.org";
  std::string user_agent = "sar2eo/0.1 (map conditioning research)";
  int zoom = -1;  // -1 picks the zoom closest to the chip ground resolution
  bool blank_missing = false;
  int max_retries = 3;
  int min_interval_ms = 250;
};

struct SynthSettings {
  int n_scenes = 64;
  SceneSpec scene;
  CorpusOptions corpus;
};

/// Every tunable of every subcommand. Text form is one `section.key = value`
/// per line; `#` starts a comment. Sections: ingest, train, loss, arch, eval,
/// osm, synth.
struct RunConfig {
  IngestConfig ingest;
  TrainConfig train;
  EvalSettings eval;
  OsmSettings osm;
  SynthSettings synth;

  /// Sets one key from its text form; unknown keys and malformed values are
  /// config errors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies a config file on top of the current values.
  void merge_text(const std::string& text, const std::string& origin = "<text>");
  void merge_file(const std::filesystem::path& path);

  /// All keys with their effective values, in a fixed order.
  std::string resolved() const;
  void write_resolved(const std::filesystem::path& dir) const;

  static std::vector<std::string> keys();

  // Keys set from a file or flag rather than left at their defaults.
  std::set<std::string> assigned;
};

inline constexpr const char* kResolvedConfigName = "config.resolved";

}  // namespace s2e
