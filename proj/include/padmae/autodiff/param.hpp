// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "padmae/autodiff/tensor.hpp"

namespace padmae::ad {

/// A named trainable tensor. `grad` always has the shape of `value`.
/// Non-trainable params never receive gradient and are never touched by an
/// optimizer step.
struct Param {
  Param(std::string name, Tensor value, bool weight_decay);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  /// Decoupled weight decay applies only when set (biases, norms, tokens and
  /// scale scalars are exempt).
  bool weight_decay = true;
  /// Per-parameter learning-rate multiplier (layerwise decay, freeze policies).
  double lr_scale = 1.0;

  void zero_grad() { grad.fill(0.0); }
};

/// Insertion-ordered collection of params with stable addresses.
class ParamStore {
 public:
  Param& add(std::string name, Tensor value, bool weight_decay = true);

  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::size_t size() const { return params_.size(); }
  std::size_t numel() const;

  /// All params in insertion order, optionally restricted to a name prefix.
  std::vector<Param*> all(std::string_view prefix = {});
  std::vector<const Param*> all(std::string_view prefix = {}) const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace padmae::ad
