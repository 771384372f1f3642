// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/policy.hpp"

#include <cmath>
#include <stdexcept>

#include "padmae/train/schedule.hpp"

namespace padmae::train {

Paradigm parse_paradigm(std::string_view s) {
  if (s == "from_scratch") return Paradigm::from_scratch;
  if (s == "cross_domain") return Paradigm::cross_domain;
  if (s == "full_from_init") return Paradigm::full_from_init;
  if (s == "pad") return Paradigm::pad;
  throw std::invalid_argument("unknown paradigm '" + std::string(s) + "'");
}

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::from_scratch: return "from_scratch";
    case Paradigm::cross_domain: return "cross_domain";
    case Paradigm::full_from_init: return "full_from_init";
    case Paradigm::pad: return "pad";
  }
  return "?";
}

void ParamGroupPolicy::apply(ad::ParamStore& store, std::size_t epoch) const {
  for (ad::Param* p : store.all()) {
    auto it = rules.find(p->name);
    if (it == rules.end()) {
      throw std::invalid_argument("ParamGroupPolicy: no rule for param " + p->name);
    }
    p->trainable = it->second.trainable && !(delayed.contains(p->name) && epoch < ps_unfreeze_epoch);
    p->lr_scale = it->second.lr_scale;
  }
}

std::set<std::string> ParamGroupPolicy::trainable_names(std::size_t epoch) const {
  std::set<std::string> out;
  for (const auto& [name, rule] : rules) {
    if (rule.trainable && !(delayed.contains(name) && epoch < ps_unfreeze_epoch)) out.insert(name);
  }
  return out;
}

std::size_t ps_unfreeze_epoch(double fraction, std::size_t total_epochs) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("ps_unfreeze_fraction must lie in [0, 1]");
  }
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total_epochs) + 1e-9));
}

bool is_adapter_param(std::string_view name) {
  return name.starts_with("encoder.blocks.") && name.find(".adapter.") != std::string_view::npos;
}

bool is_ps_param(std::string_view name) {
  return is_adapter_param(name) && name.ends_with(".adapter.ps.weight");
}

std::size_t layer_id(std::string_view name, std::size_t depth) {
  if (name.starts_with("encoder.patch_embed.") || name == "encoder.cls_token") return 0;
  constexpr std::string_view kBlocks = "encoder.blocks.";
  if (name.starts_with(kBlocks)) {
    const std::size_t start = kBlocks.size();
    const std::size_t end = name.find('.', start);
    return static_cast<std::size_t>(std::stoul(std::string(name.substr(start, end - start)))) + 1;
  }
  return depth + 1;
}

namespace {

bool is_layer_scale(std::string_view name) {
  return is_adapter_param(name) && name.ends_with(".adapter.scale");
}

}  // namespace

ParamGroupPolicy make_policy(Paradigm paradigm, const ad::ParamStore& store,
                             const PolicyOptions& options) {
  ParamGroupPolicy policy;
  policy.ps_unfreeze_epoch = 0;
  std::optional<std::vector<double>> decay;
  if (options.layer_decay) {
    decay = layerwise_decay_lrs(1.0, *options.layer_decay, options.depth);
  }
  for (const ad::Param* p : store.all()) {
    ParamRule rule;
    const std::string& name = p->name;
    if (paradigm == Paradigm::pad) {
      const bool adapter = is_adapter_param(name);
      const bool decoder = name.starts_with("decoder.");
      rule.trainable = adapter || decoder;
      if (is_ps_param(name)) policy.delayed.insert(name);
    }
    if (is_layer_scale(name) && !options.learnable_layer_scale) rule.trainable = false;
    if (decay) rule.lr_scale = (*decay)[layer_id(name, options.depth)];
    policy.rules.emplace(name, rule);
  }
  if (paradigm == Paradigm::pad) {
    policy.ps_unfreeze_epoch =
        ps_unfreeze_epoch(options.ps_unfreeze_fraction, options.total_epochs);
  }
  return policy;
}

ParamGroupPolicy frozen_policy(const ad::ParamStore& store) {
  ParamGroupPolicy policy;
  for (const ad::Param* p : store.all()) policy.rules.emplace(p->name, ParamRule{false, 1.0});
  return policy;
}

}  // namespace padmae::train
