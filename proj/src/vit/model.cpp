// SPDX-License-Identifier: Apache-2.0
#include "padmae/vit/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "padmae/autodiff/init.hpp"
#include "padmae/core/rng.hpp"

namespace padmae::vit {

using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

void sincos_1d(std::size_t dim, double pos, double* out) {
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double omega =
        1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(pos * omega);
    out[half + i] = std::cos(pos * omega);
  }
}

BlockParams add_block(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                      std::size_t hidden, Rng& rng) {
  store.add(prefix + "norm1.gain", Tensor({1, dim}, 1.0), false);
  store.add(prefix + "norm1.bias", Tensor({1, dim}, 0.0), false);
  store.add(prefix + "attn.qkv.weight", ad::xavier_uniform(dim, 3 * dim, rng));
  store.add(prefix + "attn.qkv.bias", Tensor({1, 3 * dim}, 0.0), false);
  store.add(prefix + "attn.proj.weight", ad::xavier_uniform(dim, dim, rng));
  store.add(prefix + "attn.proj.bias", Tensor({1, dim}, 0.0), false);
  BlockParams b;
  b.norm1_gain = &store.get(prefix + "norm1.gain");
  b.norm1_bias = &store.get(prefix + "norm1.bias");
  b.qkv_w = &store.get(prefix + "attn.qkv.weight");
  b.qkv_b = &store.get(prefix + "attn.qkv.bias");
  b.proj_w = &store.get(prefix + "attn.proj.weight");
  b.proj_b = &store.get(prefix + "attn.proj.bias");
  b.mlp = adapter::add_mlp_params(store, prefix + "mlp.", dim, hidden, rng);
  return b;
}

}  // namespace

Tensor sincos_pos_embed(std::size_t dim, std::size_t grid) {
  if (dim % 4 != 0) throw std::invalid_argument("sincos_pos_embed: dim must be a multiple of 4");
  Tensor t = Tensor::zeros({grid * grid, dim});
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      double* row = &t[(r * grid + c) * dim];
      sincos_1d(dim / 2, static_cast<double>(c), row);
      sincos_1d(dim / 2, static_cast<double>(r), row + dim / 2);
    }
  }
  return t;
}

Tensor patchify(const Image& image, std::size_t patch_size) {
  if (image.channels != 3) {
    throw std::invalid_argument("patchify: expected 3 channels, got " +
                                std::to_string(image.channels));
  }
  const std::size_t gh = image.height / patch_size, gw = image.width / patch_size;
  const std::size_t per = patch_size * patch_size * 3;
  Tensor out = Tensor::zeros({gh * gw, per});
  for (std::size_t pr = 0; pr < gh; ++pr) {
    for (std::size_t pc = 0; pc < gw; ++pc) {
      double* row = &out[(pr * gw + pc) * per];
      std::size_t k = 0;
      for (std::size_t y = 0; y < patch_size; ++y) {
        for (std::size_t x = 0; x < patch_size; ++x) {
          for (std::size_t ch = 0; ch < 3; ++ch) {
            row[k++] = image.at(pr * patch_size + y, pc * patch_size + x, ch);
          }
        }
      }
    }
  }
  return out;
}

Var self_attention(Tape& tape, Var x, const BlockParams& p, std::size_t heads,
                   std::vector<Tensor>* record) {
  const std::size_t d = x.cols();
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = ad::linear(tape, x, *p.qkv_w, p.qkv_b);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = ad::slice_cols(qkv, h * dh, dh);
    Var k = ad::slice_cols(qkv, d + h * dh, dh);
    Var v = ad::slice_cols(qkv, 2 * d + h * dh, dh);
    Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
    if (record) record->push_back(attn.value());
    outs.push_back(ad::matmul(attn, v));
  }
  Var merged = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::linear(tape, merged, *p.proj_w, p.proj_b);
}

MaskedAutoencoder::MaskedAutoencoder(ViTConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  build(init_seed);
}

void MaskedAutoencoder::build(std::uint64_t init_seed) {
  const ViTConfig& c = config_;
  const std::size_t d = c.embed_dim;
  Rng backbone_rng(derive_seed(init_seed, "init.backbone"));
  Rng adapter_rng(derive_seed(init_seed, "init.adapter"));
  Rng decoder_rng(derive_seed(init_seed, "init.decoder"));

  params_.add("encoder.patch_embed.weight", ad::xavier_uniform(c.patch_values(), d, backbone_rng));
  params_.add("encoder.patch_embed.bias", Tensor({1, d}, 0.0), false);
  if (c.use_cls_token) {
    params_.add("encoder.cls_token", ad::normal({1, d}, 0.02, backbone_rng), false);
  }
  for (std::size_t i = 0; i < c.depth; ++i) {
    const std::string prefix = "encoder.blocks." + std::to_string(i) + ".";
    BlockParams b = add_block(params_, prefix, d, c.mlp_hidden(), backbone_rng);
    if (c.adapter.enabled) {
      b.adapter = adapter::init_adapter(params_, prefix + "adapter.", d, c.adapter, i, c.depth,
                                        adapter_rng);
    }
    blocks_.push_back(b);
  }
  params_.add("encoder.norm.gain", Tensor({1, d}, 1.0), false);
  params_.add("encoder.norm.bias", Tensor({1, d}, 0.0), false);

  const std::size_t dd = c.decoder_dim;
  params_.add("decoder.embed.weight", ad::xavier_uniform(d, dd, decoder_rng));
  params_.add("decoder.embed.bias", Tensor({1, dd}, 0.0), false);
  params_.add("decoder.mask_token", ad::normal({1, dd}, 0.02, decoder_rng), false);
  for (std::size_t i = 0; i < c.decoder_depth; ++i) {
    decoder_blocks_.push_back(add_block(params_, "decoder.blocks." + std::to_string(i) + ".", dd,
                                        dd * c.mlp_ratio, decoder_rng));
  }
  params_.add("decoder.norm.gain", Tensor({1, dd}, 1.0), false);
  params_.add("decoder.norm.bias", Tensor({1, dd}, 0.0), false);
  params_.add("decoder.head.weight", ad::xavier_uniform(dd, c.patch_values(), decoder_rng));
  params_.add("decoder.head.bias", Tensor({1, c.patch_values()}, 0.0), false);

  enc_pos_ = sincos_pos_embed(d, c.grid());
  dec_pos_ = sincos_pos_embed(dd, c.grid());
}

Var MaskedAutoencoder::patch_embed(Tape& tape, const Image& image) {
  const std::size_t s = config_.image_size;
  if (image.width != s || image.height != s) {
    throw std::invalid_argument("patch_embed: expected " + std::to_string(s) + "x" +
                                std::to_string(s) + " image, got " + std::to_string(image.width) +
                                "x" + std::to_string(image.height));
  }
  Var patches = tape.constant(patchify(image, config_.patch_size));
  Var tokens = ad::linear(tape, patches, params_.get("encoder.patch_embed.weight"),
                          &params_.get("encoder.patch_embed.bias"));
  return ad::add(tokens, tape.constant(enc_pos_));
}

EncoderOutput MaskedAutoencoder::encode_tokens(Tape& tape, Var patch_tokens,
                                               std::vector<std::size_t> token_patches,
                                               const EncoderOptions& opts) {
  const ViTConfig& c = config_;
  if (token_patches.size() != patch_tokens.rows()) {
    throw ad::ShapeError("encode_tokens: " + std::to_string(token_patches.size()) +
                         " patch indices for " + std::to_string(patch_tokens.rows()) + " tokens");
  }
  Var x = patch_tokens;
  if (c.use_cls_token) {
    // The cls positional embedding is the zero row.
    x = ad::concat_rows({tape.param(params_.get("encoder.cls_token")), x});
  }

  EncoderOutput out;
  if (opts.capture_attention) {
    AttentionRecord rec;
    rec.has_cls = c.use_cls_token;
    rec.token_patches = token_patches;
    rec.grid = c.grid();
    out.attention = std::move(rec);
  }
  adapter::AdapterConfig bypass = c.adapter;
  bypass.enabled = false;
  const adapter::AdapterConfig& acfg =
      (opts.bypass_adapters || !c.adapter.enabled) ? bypass : c.adapter;

  for (const BlockParams& b : blocks_) {
    std::vector<Tensor>* rec = nullptr;
    if (out.attention) rec = &out.attention->layers.emplace_back();
    Var h = ad::layer_norm(tape, x, *b.norm1_gain, *b.norm1_bias);
    x = ad::add(x, self_attention(tape, h, b, c.num_heads, rec));
    adapter::PatchAdaptOutput pam = adapter::patch_adapt_mlp_forward(
        tape, x, b.mlp, b.adapter ? &*b.adapter : nullptr, acfg, opts.scale_override);
    if (opts.capture_scales && pam.scale.valid()) out.scales.push_back(pam.scale.value());
    x = ad::add(x, pam.out);
  }
  out.tokens = ad::layer_norm(tape, x, params_.get("encoder.norm.gain"),
                              params_.get("encoder.norm.bias"));
  out.token_patches = std::move(token_patches);
  return out;
}

EncoderOutput MaskedAutoencoder::encode(Tape& tape, const Image& image,
                                        const EncoderOptions& opts) {
  Var tokens = patch_embed(tape, image);
  std::vector<std::size_t> order;
  if (opts.mask) {
    if (opts.mask->num_patches() != config_.num_patches()) {
      throw ad::ShapeError("encode: mask covers " + std::to_string(opts.mask->num_patches()) +
                           " patches, image has " + std::to_string(config_.num_patches()));
    }
    order = opts.mask->visible_indices();
    if (order.empty()) throw std::invalid_argument("encode: mask leaves no visible patch");
    tokens = ad::gather_rows(tokens, order);
  } else {
    order.resize(config_.num_patches());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  return encode_tokens(tape, tokens, std::move(order), opts);
}

Var MaskedAutoencoder::decode(Tape& tape, const EncoderOutput& encoded, const mae::MaskSpec& mask) {
  const ViTConfig& c = config_;
  const std::size_t n = c.num_patches();
  const std::size_t cls = c.use_cls_token ? 1 : 0;
  const std::vector<std::size_t> visible = mask.visible_indices();
  if (mask.num_patches() != n || encoded.token_patches != visible ||
      encoded.tokens.rows() != visible.size() + cls) {
    throw ad::ShapeError("decode: mask does not match the encoded sequence (" +
                         std::to_string(encoded.tokens.rows()) + " tokens, " +
                         std::to_string(mask.num_visible) + " visible + " + std::to_string(cls) +
                         " cls expected)");
  }
  Var y = ad::linear(tape, encoded.tokens, params_.get("decoder.embed.weight"),
                     &params_.get("decoder.embed.bias"));
  Var pool = ad::concat_rows({y, tape.param(params_.get("decoder.mask_token"))});
  const std::size_t mask_row = y.rows();

  std::vector<std::size_t> slot(n, mask_row);
  for (std::size_t k = 0; k < visible.size(); ++k) slot[visible[k]] = cls + k;
  std::vector<std::size_t> gather;
  gather.reserve(n + cls);
  if (cls) gather.push_back(0);
  gather.insert(gather.end(), slot.begin(), slot.end());
  Var x = ad::gather_rows(pool, gather);

  Tensor pos = dec_pos_;
  if (cls) {
    Tensor with_cls = Tensor::zeros({n + 1, c.decoder_dim});
    std::copy(pos.storage().begin(), pos.storage().end(),
              with_cls.storage().begin() + static_cast<std::ptrdiff_t>(c.decoder_dim));
    pos = std::move(with_cls);
  }
  x = ad::add(x, tape.constant(std::move(pos)));

  adapter::AdapterConfig plain;
  plain.enabled = false;
  for (const BlockParams& b : decoder_blocks_) {
    Var h = ad::layer_norm(tape, x, *b.norm1_gain, *b.norm1_bias);
    x = ad::add(x, self_attention(tape, h, b, c.decoder_heads, nullptr));
    x = ad::add(x, adapter::patch_adapt_mlp_forward(tape, x, b.mlp, nullptr, plain).out);
  }
  x = ad::layer_norm(tape, x, params_.get("decoder.norm.gain"), params_.get("decoder.norm.bias"));
  Var pred = ad::linear(tape, x, params_.get("decoder.head.weight"),
                        &params_.get("decoder.head.bias"));
  if (!cls) return pred;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i + 1;
  return ad::gather_rows(pred, rows);
}

Tensor min_max_normalize(const Tensor& t) {
  const auto [lo, hi] = std::minmax_element(t.storage().begin(), t.storage().end());
  Tensor out = Tensor::zeros(t.shape());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = (t[i] - *lo) / range;
  return out;
}

Tensor extract_attention_map(const AttentionRecord& record, std::size_t layer) {
  if (record.layers.empty()) throw std::runtime_error("extract_attention_map: no record captured");
  if (layer >= record.layers.size()) {
    throw std::out_of_range("extract_attention_map: layer " + std::to_string(layer) +
                            " outside " + std::to_string(record.layers.size()) + " layers");
  }
  const std::size_t n = record.grid * record.grid;
  if (record.token_patches.size() != n) {
    throw std::runtime_error("extract_attention_map: record does not cover the full patch grid");
  }
  const auto& heads = record.layers[layer];
  const std::size_t offset = record.has_cls ? 1 : 0;
  const std::size_t t = heads.front().rows();
  Tensor grid = Tensor::zeros({record.grid, record.grid});
  for (const Tensor& a : heads) {
    for (std::size_t k = 0; k < n; ++k) {
      double v = 0.0;
      if (record.has_cls) {
        v = a.at(0, k + offset);
      } else {
        for (std::size_t q = 0; q < t; ++q) v += a.at(q, k);
        v /= static_cast<double>(t);
      }
      grid[record.token_patches[k]] += v / static_cast<double>(heads.size());
    }
  }
  return min_max_normalize(grid);
}

}  // namespace padmae::vit
