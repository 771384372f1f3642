// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "padmae/adapter/adapter.hpp"

namespace padmae::vit {

struct ViTConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  bool use_cls_token = true;
  adapter::AdapterConfig adapter;
  std::size_t decoder_dim = 64;
  std::size_t decoder_depth = 2;
  std::size_t decoder_heads = 4;

  /// ViT-Base/16 at 224 px with an 8-block 512-wide decoder.
  static ViTConfig paper();
  /// 32 px images, 8 px patches, d = 64, four blocks.
  static ViTConfig desk();

  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  /// Pixel values per patch (patch_size^2 * 3).
  std::size_t patch_values() const { return patch_size * patch_size * 3; }
  std::size_t mlp_hidden() const { return embed_dim * mlp_ratio; }
};

/// Encoder parameter accounting without allocating the model.
struct EncoderParamCount {
  std::uint64_t patch_embed = 0;
  std::uint64_t cls_token = 0;
  /// Fixed sine-cosine table; not trained, listed because MAE-style totals
  /// include it.
  std::uint64_t pos_embed = 0;
  std::uint64_t blocks = 0;
  std::uint64_t final_norm = 0;
  std::uint64_t adapters = 0;

  std::uint64_t backbone() const {
    return patch_embed + cls_token + pos_embed + blocks + final_norm;
  }
  std::uint64_t total() const { return backbone() + adapters; }
};

EncoderParamCount count_encoder_params(const ViTConfig& config);
std::uint64_t count_decoder_params(const ViTConfig& config);

}  // namespace padmae::vit
