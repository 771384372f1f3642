// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "padmae/autodiff/param.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/vit/config.hpp"

namespace padmae::train {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model weights plus training state. On disk: manifest.json (config echo,
/// model config, tensor index with shapes, offsets and SHA-256 digests) and
/// payload.bin (little-endian float32, tensors back to back).
struct Checkpoint {
  vit::ViTConfig model;
  std::string config_echo;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  /// Params in store order.
  std::vector<std::pair<std::string, ad::Tensor>> params;
  std::map<std::string, MomentState> moments;
  std::map<std::string, std::string> rng_states;
  std::map<std::string, std::string> meta;

  const ad::Tensor* find(std::string_view name) const;
};

Checkpoint capture_checkpoint(const ad::ParamStore& store, const vit::ViTConfig& model,
                              const Optimizer* optimizer = nullptr);

/// Writes <dir>/manifest.json and <dir>/payload.bin. Returns the payload digest.
std::string save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// Reads and verifies every tensor digest and the payload digest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Digest recorded in the manifest (SHA-256 of the payload).
std::string checkpoint_digest(const std::filesystem::path& dir);

enum class LoadScope {
  all,       ///< every store param must be present with a matching shape
  backbone,  ///< encoder params except adapters; everything else keeps its init
  /// encoder backbone, plus the decoder when the checkpoint has one
  backbone_and_decoder,
};

/// Copies checkpoint tensors into the store. Shape mismatches and missing
/// required tensors raise CheckpointError naming the tensor.
void restore_params(ad::ParamStore& store, const Checkpoint& ckpt, LoadScope scope);

void restore_moments(Optimizer& optimizer, const Checkpoint& ckpt);

bool is_backbone_param(std::string_view name);

/// SHA-256 over the exact double values of the selected params (name order
/// = store order). Used to check that frozen params stay bit-identical.
std::string params_digest(const ad::ParamStore& store,
                          const std::function<bool(const ad::Param&)>& select);

/// Encoder params excluding adapters.
std::string backbone_digest(const ad::ParamStore& store);

}  // namespace padmae::train
