// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "padmae/core/image.hpp"
#include "padmae/preprocess/synthetic.hpp"
#include "padmae/train/checkpoint.hpp"

namespace padmae::train {

/// Per-patch two-class task on synthetic target-domain images: a patch is
/// "hot" (class 1) when its mean intensity ranks in the top half of the
/// image's patch means, so every image is exactly balanced.
struct ProbeSpec {
  preprocess::CorpusKind kind = preprocess::CorpusKind::thermal;
  std::size_t train_images = 64;
  std::size_t test_images = 64;
  /// Side of the generated images; resized to the model input when different.
  std::size_t source_size = 32;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.05;
  /// Layerwise lr decay over encoder depth; the head uses lr.
  double layer_decay = 0.65;
  /// Train only the linear head.
  bool freeze_backbone = false;
  std::uint64_t seed = 0;
};

struct ProbeReport {
  std::size_t num_classes = 2;
  double chance = 0.5;
  /// Test accuracy of the untouched (zero) head.
  double initial_test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t steps = 0;
  std::vector<double> epoch_loss;
};

std::vector<std::size_t> hot_patch_labels(const Image& image, std::size_t patch_size);

/// Builds the model from the checkpoint, attaches a zero-initialized linear
/// per-patch head and fine-tunes encoder (adapters and PS included) and head
/// with AdamW under a cosine schedule.
ProbeReport run_probe(const Checkpoint& backbone, const ProbeSpec& spec);

}  // namespace padmae::train
