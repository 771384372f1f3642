// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/dataset.hpp"
#include "padmae/preprocess/segment.hpp"
#include "padmae/preprocess/synthetic.hpp"
#include "padmae/train/checkpoint.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/train/policy.hpp"
#include "padmae/train/schedule.hpp"
#include "padmae/vit/model.hpp"

namespace padmae::train {

struct CorpusSpec {
  preprocess::CorpusKind kind = preprocess::CorpusKind::thermal;
  std::size_t count = 256;
  std::size_t size = 32;
  std::uint64_t seed = 0;
};

/// Generates the corpus in memory and runs the region proposer on every
/// image (parallel over `threads`, result independent of the thread count).
preprocess::Dataset synthetic_dataset(const CorpusSpec& spec,
                                      const preprocess::SelectiveSearchParams& proposer,
                                      std::size_t threads = 1);

struct PretrainConfig {
  std::size_t epochs = 10;
  double mask_ratio = 0.75;
  /// optimizer.batch_size is the number of images per step.
  OptimizerConfig optimizer;
  /// total_epochs is taken from `epochs`.
  ScheduleConfig schedule;
  double ps_unfreeze_fraction = 0.6;
  std::optional<double> layer_decay;
  bool learnable_layer_scale = false;
  /// Random RoI cropping; when false every crop is a random resized crop.
  bool roi_crop = true;
  preprocess::CropConfig crop;
  /// Write a checkpoint every k epochs (0: final checkpoint only).
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  /// Mean of the step losses of the epoch.
  double smoothed_loss = 0.0;
  /// Learning rate of the last step of the epoch.
  double lr = 0.0;
  /// Share of crops that came from the random-resized-crop path.
  double fallback_crop_rate = 0.0;
  /// Seconds since the start of the run.
  double wall_time = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);
EpochRecord parse_epoch_record(const std::string& line);
std::vector<EpochRecord> read_epoch_log(const std::filesystem::path& path);

struct PretrainHooks {
  /// Called after every epoch, after the frozen-parameter check.
  std::function<void(const EpochRecord&, const vit::MaskedAutoencoder&)> on_epoch;
  /// When set: <run_dir>/epochs.log and <run_dir>/checkpoints/.
  std::filesystem::path run_dir;
  std::string config_echo;
};

struct PretrainResult {
  std::vector<EpochRecord> epochs;
  /// Loss of the very first batch, measured before any update.
  std::optional<double> initial_loss;
  std::uint64_t steps = 0;
  /// Payload digest of the final checkpoint when one was written.
  std::string final_digest;
};

/// Stage-B loop: crop, normalize, mask, step. The paradigm's policy decides
/// what trains at each epoch; params frozen at an epoch are hashed before and
/// after it and a change aborts the run. cross_domain performs no steps.
PretrainResult run_pretraining(vit::MaskedAutoencoder& model, Paradigm paradigm,
                               const preprocess::Dataset& data, const PretrainConfig& cfg,
                               const PretrainHooks& hooks = {});

/// One epoch worth of model inputs: crop -> resize -> normalize, plus masks.
/// Exposed for tests; per-image RNG streams make it thread-count independent.
struct EpochSamples {
  std::vector<Image> images;
  std::vector<mae::MaskSpec> masks;
  std::size_t fallbacks = 0;
};
EpochSamples prepare_epoch(const preprocess::Dataset& data, const vit::ViTConfig& model,
                           const PretrainConfig& cfg, std::size_t epoch);

/// Stage A: generic MAE pre-training standing in for the large natural-image
/// stage. Either an existing checkpoint or a from-scratch run on `corpus`.
struct StageASpec {
  std::optional<std::filesystem::path> checkpoint;
  CorpusSpec corpus{preprocess::CorpusKind::textured, 256, 32, 0};
  PretrainConfig train;
};

/// Trains (or loads) stage-A weights for `model` with adapters disabled.
Checkpoint obtain_stage_a(const vit::ViTConfig& model, const StageASpec& spec,
                          const preprocess::SelectiveSearchParams& proposer);

/// Fresh model for a paradigm. Everything except from_scratch starts from the
/// stage-A backbone (and its decoder when present); adapters keep their init.
std::unique_ptr<vit::MaskedAutoencoder> build_stage_b_model(Paradigm paradigm,
                                                            const vit::ViTConfig& model,
                                                            const Checkpoint* stage_a,
                                                            std::uint64_t init_seed);

}  // namespace padmae::train
