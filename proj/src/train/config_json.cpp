// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/config_json.hpp"

namespace padmae::train {

using nlohmann::json;

JsonFields::JsonFields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) {
    throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
  }
}

std::string JsonFields::key_path(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

const json* JsonFields::take(const char* key) {
  auto it = object_.find(key);
  if (it == object_.end()) return nullptr;
  used_.insert(key);
  return &*it;
}

const json* JsonFields::child(const char* key) { return take(key); }

void JsonFields::finish() const {
  for (auto it = object_.begin(); it != object_.end(); ++it) {
    if (!used_.count(it.key())) throw ConfigError("unknown key '" + key_path(it.key()) + "'");
  }
}

json to_json(const adapter::AdapterConfig& c) {
  return {{"enabled", c.enabled},
          {"middle_dim", c.middle_dim},
          {"scale_mode", adapter::to_string(c.scale_mode)},
          {"ps_input", adapter::to_string(c.ps_input)},
          {"schedule",
           {{"kind", adapter::to_string(c.schedule.kind)},
            {"rate", c.schedule.rate},
            {"last_value", c.schedule.last_value}}},
          {"layerwise_values", c.layerwise_values}};
}

json to_json(const vit::ViTConfig& c) {
  return {{"image_size", c.image_size},     {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},       {"depth", c.depth},
          {"num_heads", c.num_heads},       {"mlp_ratio", c.mlp_ratio},
          {"use_cls_token", c.use_cls_token}, {"decoder_dim", c.decoder_dim},
          {"decoder_depth", c.decoder_depth}, {"decoder_heads", c.decoder_heads},
          {"adapter", to_json(c.adapter)}};
}

json to_json(const OptimizerConfig& c) {
  return {{"kind", to_string(c.kind)},   {"base_lr", c.base_lr},
          {"beta1", c.beta1},            {"beta2", c.beta2},
          {"weight_decay", c.weight_decay}, {"eps", c.eps},
          {"batch_size", c.batch_size}};
}

json to_json(const ScheduleConfig& c) {
  json j = {{"kind", to_string(c.kind)},
            {"warmup_epochs", c.warmup_epochs},
            {"total_epochs", c.total_epochs},
            {"step_milestones", c.step_milestones}};
  j["layerwise_decay_rate"] = c.layerwise_decay_rate ? json(*c.layerwise_decay_rate) : json(nullptr);
  return j;
}

json to_json(const preprocess::CropConfig& c) {
  return {{"max_iterations", c.max_iterations}, {"l_min", c.l_min},
          {"translate_frac", c.translate_frac}, {"scale_lo", c.scale_lo},
          {"scale_hi", c.scale_hi},             {"ratio_min", c.ratio_min},
          {"large_roi_prob", c.large_roi_prob}, {"output_size", c.output_size},
          {"jitter", c.jitter}};
}

json to_json(const preprocess::SelectiveSearchParams& c) {
  return {{"k", c.segment.k},
          {"min_size", c.segment.min_size},
          {"sigma", c.segment.sigma},
          {"histogram_bins", c.histogram_bins}};
}

void update_from_json(adapter::AdapterConfig& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get("enabled", c.enabled);
  f.get("middle_dim", c.middle_dim);
  f.get_enum("scale_mode", c.scale_mode, adapter::parse_scale_mode);
  f.get_enum("ps_input", c.ps_input, adapter::parse_ps_input_mode);
  if (const json* s = f.child("schedule")) {
    JsonFields g(*s, f.key_path("schedule"));
    g.get_enum("kind", c.schedule.kind, adapter::parse_schedule_kind);
    g.get("rate", c.schedule.rate);
    g.get("last_value", c.schedule.last_value);
    g.finish();
  }
  f.get("layerwise_values", c.layerwise_values);
  f.finish();
}

void update_from_json(vit::ViTConfig& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get("image_size", c.image_size);
  f.get("patch_size", c.patch_size);
  f.get("embed_dim", c.embed_dim);
  f.get("depth", c.depth);
  f.get("num_heads", c.num_heads);
  f.get("mlp_ratio", c.mlp_ratio);
  f.get("use_cls_token", c.use_cls_token);
  f.get("decoder_dim", c.decoder_dim);
  f.get("decoder_depth", c.decoder_depth);
  f.get("decoder_heads", c.decoder_heads);
  if (const json* a = f.child("adapter")) update_from_json(c.adapter, *a, f.key_path("adapter"));
  f.finish();
}

void update_from_json(OptimizerConfig& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get_enum("kind", c.kind, parse_optimizer_kind);
  f.get("base_lr", c.base_lr);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("weight_decay", c.weight_decay);
  f.get("eps", c.eps);
  f.get("batch_size", c.batch_size);
  f.finish();
}

void update_from_json(ScheduleConfig& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get_enum("kind", c.kind, parse_schedule_kind);
  f.get("warmup_epochs", c.warmup_epochs);
  f.get("total_epochs", c.total_epochs);
  f.get("step_milestones", c.step_milestones);
  if (const json* r = f.child("layerwise_decay_rate")) {
    if (r->is_null()) {
      c.layerwise_decay_rate.reset();
    } else if (r->is_number()) {
      c.layerwise_decay_rate = r->get<double>();
    } else {
      throw ConfigError("bad value for '" + f.key_path("layerwise_decay_rate") + "'");
    }
  }
  f.finish();
}

void update_from_json(preprocess::CropConfig& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get("max_iterations", c.max_iterations);
  f.get("l_min", c.l_min);
  f.get("translate_frac", c.translate_frac);
  f.get("scale_lo", c.scale_lo);
  f.get("scale_hi", c.scale_hi);
  f.get("ratio_min", c.ratio_min);
  f.get("large_roi_prob", c.large_roi_prob);
  f.get("output_size", c.output_size);
  f.get("jitter", c.jitter);
  f.finish();
}

void update_from_json(preprocess::SelectiveSearchParams& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get("k", c.segment.k);
  f.get("min_size", c.segment.min_size);
  f.get("sigma", c.segment.sigma);
  f.get("histogram_bins", c.histogram_bins);
  f.finish();
}

vit::ViTConfig vit_config_from_json(const json& j) {
  vit::ViTConfig c;
  update_from_json(c, j, "model");
  return c;
}

}  // namespace padmae::train
