// SPDX-License-Identifier: Apache-2.0
#include "padmae/mae/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace padmae::mae {

using ad::Tensor;
using ad::Var;

MaskSpec random_masking(std::size_t n, double mask_ratio, Rng& rng) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw std::invalid_argument("random_masking: mask_ratio must lie in [0, 1), got " +
                                std::to_string(mask_ratio));
  }
  if (n == 0) throw std::invalid_argument("random_masking: no patches");
  MaskSpec spec;
  spec.permutation.resize(n);
  for (std::size_t i = 0; i < n; ++i) spec.permutation[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(spec.permutation[i], spec.permutation[rng.uniform_index(i + 1)]);
  }
  // The epsilon absorbs representation error such as 10 * (1 - 0.3) = 6.99...
  spec.num_visible = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * (1.0 - mask_ratio) + 1e-9));
  spec.binary_mask.assign(n, 1);
  for (std::size_t i = 0; i < spec.num_visible; ++i) spec.binary_mask[spec.permutation[i]] = 0;
  return spec;
}

Tensor normalize_patch_targets(const Image& image, std::size_t patch_size) {
  Tensor t = vit::patchify(image, patch_size);
  const std::size_t rows = t.rows(), cols = t.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = &t[r * cols];
    if (std::all_of(row, row + cols, [&](double v) { return v == row[0]; })) {
      std::fill(row, row + cols, 0.0);
      continue;
    }
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - mean) * inv;
  }
  return t;
}

Var mae_loss(Var predictions, const Tensor& targets, const MaskSpec& mask) {
  if (predictions.shape() != targets.shape()) {
    throw ad::ShapeError("mae_loss", predictions.shape(), targets.shape());
  }
  if (mask.num_patches() != targets.rows()) {
    throw ad::ShapeError("mae_loss: mask covers " + std::to_string(mask.num_patches()) +
                         " patches, targets have " + std::to_string(targets.rows()));
  }
  const std::vector<std::size_t> masked = mask.masked_indices();
  if (masked.empty()) throw std::invalid_argument("mae_loss: no masked patches");
  ad::Tape& tape = predictions.tape();
  Tensor picked = Tensor::zeros({masked.size(), targets.cols()});
  for (std::size_t i = 0; i < masked.size(); ++i) {
    for (std::size_t c = 0; c < targets.cols(); ++c) picked.at(i, c) = targets.at(masked[i], c);
  }
  Var diff = ad::sub(ad::gather_rows(predictions, masked), tape.constant(std::move(picked)));
  return ad::mean_all(ad::mul(diff, diff));
}

namespace {

double accumulate_batch(const PretrainBatch& batch, vit::MaskedAutoencoder& model,
                        bool backward) {
  if (batch.images.empty()) throw std::invalid_argument("pretrain_step: empty batch");
  if (batch.masks.size() != batch.images.size()) {
    throw std::invalid_argument("pretrain_step: one MaskSpec per image required");
  }
  const double inv_b = 1.0 / static_cast<double>(batch.images.size());
  const std::size_t p = model.config().patch_size;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    ad::Tape tape;
    vit::EncoderOptions opts;
    opts.mask = &batch.masks[i];
    vit::EncoderOutput enc = model.encode(tape, batch.images[i], opts);
    Var pred = model.decode(tape, enc, batch.masks[i]);
    Var loss = mae_loss(pred, normalize_patch_targets(batch.images[i], p), batch.masks[i]);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      const std::string where =
          i < batch.provenance.size() ? batch.provenance[i] : "batch index " + std::to_string(i);
      throw std::runtime_error("pretrain_step: non-finite loss for " + where);
    }
    total += value;
    if (backward) tape.backward(ad::scale(loss, inv_b));
  }
  return total * inv_b;
}

}  // namespace

double pretrain_step(const PretrainBatch& batch, vit::MaskedAutoencoder& model,
                     train::Optimizer& optimizer, const train::ParamGroupPolicy& policy,
                     std::size_t epoch, double lr) {
  policy.apply(model.params(), epoch);
  model.params().zero_grad();
  const double loss = accumulate_batch(batch, model, true);
  auto params = model.params().all();
  optimizer.step(params, lr);
  return loss;
}

double evaluate_loss(const PretrainBatch& batch, vit::MaskedAutoencoder& model) {
  return accumulate_batch(batch, model, false);
}

}  // namespace padmae::mae
