// SPDX-License-Identifier: Apache-2.0
#include "padmae/vit/config.hpp"

#include <stdexcept>
#include <string>

namespace padmae::vit {

ViTConfig ViTConfig::paper() {
  ViTConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.num_heads = 12;
  c.decoder_dim = 512;
  c.decoder_depth = 8;
  c.decoder_heads = 16;
  c.adapter.middle_dim = 64;
  return c;
}

ViTConfig ViTConfig::desk() {
  ViTConfig c;
  c.adapter.middle_dim = 16;
  return c;
}

void ViTConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ViTConfig: " + msg); };
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
         std::to_string(patch_size));
  }
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (decoder_heads == 0 || decoder_dim % decoder_heads != 0) {
    fail("decoder_dim is not divisible by decoder_heads");
  }
  // 2-D sine-cosine embeddings split the width into four equal parts.
  if (embed_dim % 4 != 0 || decoder_dim % 4 != 0) fail("embedding widths must be multiples of 4");
  if (depth == 0) fail("depth must be >= 1");
  if (mlp_ratio == 0) fail("mlp_ratio must be >= 1");
  if (adapter.enabled) adapter.validate(depth);
}

namespace {

std::uint64_t block_params(std::uint64_t d, std::uint64_t hidden) {
  const std::uint64_t norms = 4 * d;
  const std::uint64_t attn = d * 3 * d + 3 * d + d * d + d;
  const std::uint64_t mlp = d * hidden + hidden + hidden * d + d;
  return norms + attn + mlp;
}

}  // namespace

EncoderParamCount count_encoder_params(const ViTConfig& c) {
  EncoderParamCount n;
  const std::uint64_t d = c.embed_dim;
  n.patch_embed = c.patch_values() * d + d;
  n.cls_token = c.use_cls_token ? d : 0;
  n.pos_embed = (c.num_patches() + (c.use_cls_token ? 1 : 0)) * d;
  n.blocks = block_params(d, c.mlp_hidden()) * c.depth;
  n.final_norm = 2 * d;
  n.adapters = adapter::count_adapter_params(c.adapter, c.embed_dim, c.depth);
  return n;
}

std::uint64_t count_decoder_params(const ViTConfig& c) {
  const std::uint64_t d = c.embed_dim, dd = c.decoder_dim;
  return d * dd + dd + dd + block_params(dd, dd * c.mlp_ratio) * c.decoder_depth + 2 * dd +
         dd * c.patch_values() + c.patch_values();
}

}  // namespace padmae::vit
