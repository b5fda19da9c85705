#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/losses.hpp"
#include "s2e/manifest.hpp"
#include "s2e/model.hpp"
#include "s2e/optim.hpp"

namespace s2e {

/// Architecture knobs; channel counts are derived from the SAR kind and the
/// conditioning list.
struct ArchitectureConfig {
  int g_base_width = 64;
  int g_n_downsample = 4;
  int g_n_resblocks = 9;
  double g_dropout = 0.5;
  int d_num_scales = 3;
  int d_base_width = 64;
  int d_n_layers = 3;
  bool d_instance_norm = true;
  bool operator==(const ArchitectureConfig&) const = default;
};

struct TrainConfig {
  int batch_size = 4;
  int epochs = 400;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;  // epochs; 0 keeps only the final bundle
  Conditioning conditioning;
  LossConfig loss;
  ArchitectureConfig arch;

  // Stop after this many optimizer steps in total (0 = run all epochs).
  std::uint64_t max_steps = 0;
  // Linear decay to zero starting at this epoch; negative disables it.
  int lr_decay_start_epoch = -1;
  // Skip discriminator updates (its loss is still reported).
  bool freeze_discriminator = false;
  // wall_ms is written as 0 when off, which makes logs byte-comparable.
  bool log_wall_time = true;

  void validate() const;

  /// Published recipe: batch 4, 400 epochs, Adam 2e-4 (0.5, 0.999), three
  /// discriminators, lambda 10, full-width networks.
  static TrainConfig reference();
  /// Desk-scale preset for CPU runs on small synthetic chips: same
  /// optimizer and loss settings, narrow networks, 5 epochs.
  static TrainConfig desk();

  bool operator==(const TrainConfig&) const = default;
};

GeneratorConfig generator_config(const TrainConfig& cfg, ModalityKind sar_kind);
DiscriminatorConfig discriminator_config(const TrainConfig& cfg, ModalityKind sar_kind);

/// Generator + discriminator ensemble + optimizer state + progress counters.
///
/// Training consumes an endless stream of per-epoch shuffles; `step` counts
/// optimizer steps and fixes the position in that stream.
struct ModelBundle {
  TrainConfig config;
  ModalityKind sar_kind = ModalityKind::sar_dual_pol;
  std::unique_ptr<Generator<float>> generator;
  std::unique_ptr<MultiScaleDiscriminator<float>> discriminator;
  std::unique_ptr<Adam<float>> g_optimizer;
  std::unique_ptr<Adam<float>> d_optimizer;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;  // completed epochs

  /// Freshly initialized networks (N(0, 0.02) weights from config.seed).
  static ModelBundle create(const TrainConfig& config, ModalityKind sar_kind);

  int sar_channels() const { return channel_count(sar_kind); }
  int generator_channels() const;
};

struct StepReport {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_fm = 0.0;
  double g_total = 0.0;
  double l1_monitor = 0.0;  // mean |G(x) - y| before the generator update
  double wall_ms = 0.0;
  bool operator==(const StepReport&) const = default;
};

std::string format_log_line(const StepReport& report);
StepReport parse_log_line(const std::string& line);

/// One discriminator update then one generator update on a batch of
/// conditioned inputs x (N x C x H x W) and EO targets y (N x 3 x H x W).
/// `step` seeds dropout and, for gan_eq1, the noise planes.
StepReport train_step(ModelBundle& bundle, const nn::Tensor<float>& x,
                      const nn::Tensor<float>& y, std::uint64_t step);

/// Same update from Sample records; the batch conditioning must match the
/// bundle's conditioning.
StepReport train_step(ModelBundle& bundle, const std::vector<Sample>& batch);

/// Conditioned input tensor (SAR then conditions in order) for one sample.
nn::Tensor<float> conditioned_input(const Sample& sample, const Conditioning& conditioning);

/// In-memory training set.
struct TrainData {
  std::vector<std::string> ids;
  std::vector<nn::Tensor<float>> inputs;   // 1 x C x H x W
  std::vector<nn::Tensor<float>> targets;  // 1 x 3 x H x W
  std::size_t size() const { return ids.size(); }
};

TrainData load_split(const Manifest& manifest, Split split, const Conditioning& conditioning);

/// Sample order of one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct FitOptions {
  std::optional<std::filesystem::path> resume_from;
  // Called after every step, e.g. for progress output.
  std::function<void(const StepReport&)> on_step;
};

/// Trains on the manifest's train split. Writes `train_log.jsonl`,
/// periodic `checkpoints/epoch_NNNN.s2eb` and the final `bundle.s2eb`
/// under out_dir. Resuming from a checkpoint continues bit-identically.
ModelBundle fit(const Manifest& manifest, const TrainConfig& cfg,
                const std::filesystem::path& out_dir, const FitOptions& options = {});

// Checkpoint container (little-endian):
//   8 bytes magic "S2EBNDL1"
//   u32 format version, u64 header length
//   header: JSON with configs, counters and a tensor table
//           (name, shape, offset and count in floats)
//   f32 tensor payload
//   u32 CRC-32 of every preceding byte
inline constexpr const char* kBundleMagic = "S2EBNDL1";
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr const char* kBundleFileName = "bundle.s2eb";
inline constexpr const char* kTrainLogName = "train_log.jsonl";

struct TensorRecord {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;  // in floats from the payload start
  std::uint64_t count = 0;
};

struct BundleHeader {
  std::uint32_t version = 0;
  TrainConfig config;
  ModalityKind sar_kind = ModalityKind::sar_dual_pol;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t g_optimizer_steps = 0;
  std::uint64_t d_optimizer_steps = 0;
  std::vector<TensorRecord> tensors;
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Reads and verifies the header without building any network.
BundleHeader read_bundle_header(const std::filesystem::path& path);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace s2e
