// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "padmae/autodiff/param.hpp"

namespace padmae::train {

/// (a) from scratch, (b) cross-domain fine-tuning, (c) full pre-training from
/// stage-A weights, (d) pre-training with adapters.
enum class Paradigm { from_scratch, cross_domain, full_from_init, pad };

Paradigm parse_paradigm(std::string_view s);
std::string to_string(Paradigm p);

struct ParamRule {
  bool trainable = true;
  double lr_scale = 1.0;
};

/// Freeze flags and lr multipliers encoding a paradigm. PS params listed in
/// `delayed` stay frozen until `ps_unfreeze_epoch`.
struct ParamGroupPolicy {
  std::map<std::string, ParamRule> rules;
  std::set<std::string> delayed;
  std::size_t ps_unfreeze_epoch = 0;

  /// Writes trainable / lr_scale onto every param for the given epoch.
  void apply(ad::ParamStore& store, std::size_t epoch) const;
  std::set<std::string> trainable_names(std::size_t epoch) const;
};

/// Epoch at which PS params start updating: floor(fraction * total_epochs).
std::size_t ps_unfreeze_epoch(double fraction, std::size_t total_epochs);

/// Layer id used for layerwise lr decay: 0 for patch embedding and cls, i + 1
/// for encoder block i (adapters included), depth + 1 for the final norm and
/// everything outside the encoder.
std::size_t layer_id(std::string_view param_name, std::size_t depth);

struct PolicyOptions {
  std::size_t depth = 0;
  std::size_t total_epochs = 1;
  double ps_unfreeze_fraction = 0.6;
  /// Geometric lr decay over encoder depth (full pre-training variant).
  std::optional<double> layer_decay;
  /// Layerwise scale scalars are trainable only in the learnable mode.
  bool learnable_layer_scale = false;
};

/// PAD: backbone frozen; vanilla adapter, PS module (delayed) and decoder
/// trainable. Other paradigms: every param trainable (cross_domain has no
/// stage-B steps but the rule set is still well defined).
ParamGroupPolicy make_policy(Paradigm paradigm, const ad::ParamStore& store,
                             const PolicyOptions& options);

/// Every param frozen.
ParamGroupPolicy frozen_policy(const ad::ParamStore& store);

bool is_adapter_param(std::string_view name);
bool is_ps_param(std::string_view name);

}  // namespace padmae::train
