// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "padmae/autodiff/ops.hpp"
#include "padmae/core/image.hpp"
#include "padmae/core/rng.hpp"
#include "padmae/mae/mask_spec.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/train/policy.hpp"
#include "padmae/vit/model.hpp"

namespace padmae::mae {

/// Uniform random permutation of n patches; the first floor(n * (1 - ratio))
/// entries are visible. Requires 0 <= ratio < 1.
MaskSpec random_masking(std::size_t num_patches, double mask_ratio, Rng& rng);

/// Per-patch (pixels - mean) / sqrt(var + 1e-6) over all pixel-channels of
/// the patch (population variance). Rows follow vit::patchify.
ad::Tensor normalize_patch_targets(const Image& image, std::size_t patch_size);

/// Mean over masked patches of the per-patch mean squared error. Visible rows
/// of `predictions` receive exactly zero gradient.
ad::Var mae_loss(ad::Var predictions, const ad::Tensor& targets, const MaskSpec& mask);

struct PretrainBatch {
  std::vector<Image> images;
  std::vector<MaskSpec> masks;
  /// Human-readable origin of each image (path or synthetic index + epoch).
  std::vector<std::string> provenance;
};

/// Forward (mask -> encoder -> decoder), loss, backward and an optimizer
/// update restricted to the params the policy marks trainable at `epoch`.
/// Returns the batch-mean loss. A non-finite loss aborts with provenance.
double pretrain_step(const PretrainBatch& batch, vit::MaskedAutoencoder& model,
                     train::Optimizer& optimizer, const train::ParamGroupPolicy& policy,
                     std::size_t epoch, double lr);

/// Batch-mean loss without any update.
double evaluate_loss(const PretrainBatch& batch, vit::MaskedAutoencoder& model);

}  // namespace padmae::mae
