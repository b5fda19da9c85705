#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/image_io.hpp"
#include "s2e/manifest.hpp"
#include "s2e/metrics.hpp"
#include "s2e/train.hpp"

namespace s2e {

struct SampleMetrics {
  std::string id;
  double psnr = 0.0;   // dB
  double ssim = 0.0;   // clipped to [0, 1]
  double lpips = 0.0;
  bool operator==(const SampleMetrics&) const = default;
};

struct MetricAggregate {
  double psnr = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  bool operator==(const MetricAggregate&) const = default;
};

/// Per-sample metrics (sorted by id) and their arithmetic means.
struct MetricReport {
  std::string run_label;
  std::string conditioning;  // e.g. "sar" or "sar+map"
  std::string backbone;
  std::vector<SampleMetrics> per_sample;
  MetricAggregate aggregate;

  /// Sorts per_sample by id and recomputes the aggregate.
  void finalize();
  bool operator==(const MetricReport&) const = default;
};

std::string write_report_json(const MetricReport& report);
MetricReport parse_report_json(const std::string& text);
void save_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport load_report(const std::filesystem::path& path);

/// Metrics between one generated chip and its reference (both unit_signed).
SampleMetrics score_pair(const std::string& id, const RasterChip& generated,
                         const RasterChip& reference, FeatureExtractor& backbone);

/// Produces the EO estimate for a test sample.
using EoGenerator = std::function<RasterChip(const Sample&)>;

struct EvalOptions {
  std::string run_label = "run";
  // When set: report.json, generated/<id>.png, panels/<id>.{sar,ref}.png and
  // figure.png (SAR | reference | generated for the first figure_rows samples).
  std::optional<std::filesystem::path> out_dir;
  int figure_rows = 6;
};

/// Scores `generator` on every test sample of the manifest.
MetricReport evaluate_samples(const EoGenerator& generator, const Manifest& manifest,
                              const Conditioning& conditioning, FeatureExtractor& backbone,
                              const EvalOptions& options = {});

/// Scores a trained bundle in inference mode. The conditioning must equal the
/// one the bundle was trained with.
MetricReport evaluate_run(ModelBundle& bundle, const Manifest& manifest,
                          const Conditioning& conditioning, FeatureExtractor& backbone,
                          const EvalOptions& options = {});

/// Deterministic inference for one sample (dropout off).
RasterChip infer(ModelBundle& bundle, const Sample& sample);

enum class TableFormat { markdown, csv };

/// Comparison table with one row per run: PSNR (higher is better), SSIM
/// (higher is better), LPIPS (lower is better) and the sample count.
std::string render_table(const std::vector<MetricReport>& reports, TableFormat format);

/// Grid with one row per sample shared by all run directories:
/// SAR | reference EO | one generated panel per run.
Rgb8Image comparison_figure(const std::vector<std::filesystem::path>& run_dirs, int max_rows);

inline constexpr const char* kReportFileName = "report.json";

}  // namespace s2e
