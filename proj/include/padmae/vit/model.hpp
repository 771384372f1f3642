// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "padmae/adapter/adapter.hpp"
#include "padmae/autodiff/ops.hpp"
#include "padmae/autodiff/param.hpp"
#include "padmae/core/image.hpp"
#include "padmae/mae/mask_spec.hpp"
#include "padmae/vit/config.hpp"

namespace padmae::vit {

/// Per-layer, per-head attention weights from the most recent forward pass.
struct AttentionRecord {
  /// layers[l][h] is a T x T row-stochastic matrix.
  std::vector<std::vector<ad::Tensor>> layers;
  bool has_cls = false;
  /// Patch index of each non-cls token, in token order.
  std::vector<std::size_t> token_patches;
  std::size_t grid = 0;
};

struct EncoderOptions {
  /// Only visible tokens (plus cls) enter the blocks when set.
  const mae::MaskSpec* mask = nullptr;
  bool capture_attention = false;
  bool capture_scales = false;
  /// Run PatchAdaptMLP as a plain MLP regardless of the adapter config.
  bool bypass_adapters = false;
  /// Replace every adapter scale by a constant.
  std::optional<double> scale_override;
};

struct EncoderOutput {
  /// (cls + visible) x d after the final LayerNorm.
  ad::Var tokens;
  /// Patch index of each non-cls output token.
  std::vector<std::size_t> token_patches;
  std::optional<AttentionRecord> attention;
  /// Per-layer fusion scale values (T x 1 patchwise, 1 x 1 layerwise).
  std::vector<ad::Tensor> scales;
};

struct BlockParams {
  ad::Param* norm1_gain = nullptr;
  ad::Param* norm1_bias = nullptr;
  ad::Param* qkv_w = nullptr;
  ad::Param* qkv_b = nullptr;
  ad::Param* proj_w = nullptr;
  ad::Param* proj_b = nullptr;
  adapter::MlpParams mlp;
  std::optional<adapter::AdapterParams> adapter;
};

/// Fixed 2-D sine-cosine positional table for a grid x grid layout, one row
/// per patch in raster order; the first half of each row encodes the column,
/// the second half the row.
ad::Tensor sincos_pos_embed(std::size_t dim, std::size_t grid);

/// Flattens an image into N x (p*p*3) patch rows, raster order, pixel values
/// within a patch ordered (py, px, channel).
ad::Tensor patchify(const Image& image, std::size_t patch_size);

/// Multi-head self-attention sub-block (without the residual). Appends each
/// head's weights to `record` when it is non-null.
ad::Var self_attention(ad::Tape& tape, ad::Var x, const BlockParams& p, std::size_t heads,
                       std::vector<ad::Tensor>* record);

/// ViT encoder whose MLP blocks are PatchAdaptMLP, plus the MAE decoder.
/// Parameter names: encoder.*, encoder.blocks.<i>.adapter.*, decoder.*.
class MaskedAutoencoder {
 public:
  MaskedAutoencoder(ViTConfig config, std::uint64_t init_seed);

  const ViTConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  std::vector<BlockParams>& encoder_blocks() { return blocks_; }

  /// N x d patch tokens with positional embeddings added (no cls).
  ad::Var patch_embed(ad::Tape& tape, const Image& image);

  /// Runs cls prepending, the encoder blocks and the final norm on an arbitrary
  /// token sequence (rows already carry positional embeddings).
  EncoderOutput encode_tokens(ad::Tape& tape, ad::Var patch_tokens,
                              std::vector<std::size_t> token_patches, const EncoderOptions& opts);

  EncoderOutput encode(ad::Tape& tape, const Image& image, const EncoderOptions& opts = {});

  /// N x (p*p*3) per-patch predictions.
  ad::Var decode(ad::Tape& tape, const EncoderOutput& encoded, const mae::MaskSpec& mask);

 private:
  void build(std::uint64_t init_seed);

  ViTConfig config_;
  ad::ParamStore params_;
  std::vector<BlockParams> blocks_;
  std::vector<BlockParams> decoder_blocks_;
  ad::Tensor enc_pos_;
  ad::Tensor dec_pos_;
};

/// Mean over heads of the cls-query row (or of the mean query row without
/// cls), laid out on the patch grid and min-max normalized to [0, 1]. A
/// constant map normalizes to all zeros.
ad::Tensor extract_attention_map(const AttentionRecord& record, std::size_t layer);

/// Min-max normalization with the constant-map -> zeros rule.
ad::Tensor min_max_normalize(const ad::Tensor& t);

}  // namespace padmae::vit
