// SPDX-License-Identifier: Apache-2.0
#include "padmae/adapter/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "padmae/autodiff/init.hpp"

namespace padmae::adapter {

using ad::Param;
using ad::Tensor;
using ad::Var;

std::string to_string(ScaleMode m) {
  switch (m) {
    case ScaleMode::patchwise: return "patchwise";
    case ScaleMode::layerwise_frozen: return "layerwise_frozen";
    case ScaleMode::layerwise_learnable: return "layerwise_learnable";
  }
  return "?";
}

std::string to_string(PsInputMode m) {
  switch (m) {
    case PsInputMode::concat: return "concat";
    case PsInputMode::sum: return "sum";
    case PsInputMode::adapt_only: return "adapt_only";
    case PsInputMode::mlp_only: return "mlp_only";
  }
  return "?";
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::exp_decay: return "exp_decay";
    case ScheduleKind::even_decay: return "even_decay";
  }
  return "?";
}

ScaleMode parse_scale_mode(std::string_view s) {
  if (s == "patchwise") return ScaleMode::patchwise;
  if (s == "layerwise_frozen") return ScaleMode::layerwise_frozen;
  if (s == "layerwise_learnable") return ScaleMode::layerwise_learnable;
  throw std::invalid_argument("unknown scale_mode '" + std::string(s) + "'");
}

PsInputMode parse_ps_input_mode(std::string_view s) {
  if (s == "concat") return PsInputMode::concat;
  if (s == "sum") return PsInputMode::sum;
  if (s == "adapt_only") return PsInputMode::adapt_only;
  if (s == "mlp_only") return PsInputMode::mlp_only;
  throw std::invalid_argument("unknown ps_input_mode '" + std::string(s) + "'");
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "exp_decay") return ScheduleKind::exp_decay;
  if (s == "even_decay") return ScheduleKind::even_decay;
  throw std::invalid_argument("unknown scale schedule '" + std::string(s) + "'");
}

std::vector<double> layerwise_scale_schedule(ScheduleKind kind, double rate, double last_value,
                                             std::size_t depth) {
  if (!std::isfinite(last_value)) throw std::invalid_argument("scale schedule: non-finite value");
  if (kind != ScheduleKind::constant && !(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("scale schedule: decay rate must lie in (0, 1], got " +
                                std::to_string(rate));
  }
  std::vector<double> out(depth);
  for (std::size_t l = 1; l <= depth; ++l) {
    const double steps = static_cast<double>(depth - l);
    switch (kind) {
      case ScheduleKind::constant: out[l - 1] = last_value; break;
      case ScheduleKind::exp_decay: out[l - 1] = last_value * std::pow(rate, steps); break;
      case ScheduleKind::even_decay:
        out[l - 1] = std::max(last_value - (1.0 - rate) * steps, kEvenDecayFloor);
        break;
    }
  }
  return out;
}

void AdapterConfig::validate(std::size_t depth) const {
  if (middle_dim < 1) throw std::invalid_argument("adapter: middle_dim must be >= 1");
  if (!layerwise_values.empty() && layerwise_values.size() != depth) {
    throw std::invalid_argument("adapter: layerwise_values has " +
                                std::to_string(layerwise_values.size()) + " entries, depth is " +
                                std::to_string(depth));
  }
  for (double v : layerwise_values) {
    if (!std::isfinite(v)) throw std::invalid_argument("adapter: non-finite layerwise scale");
  }
  if (scale_mode != ScaleMode::patchwise && layerwise_values.empty()) {
    layerwise_scale_schedule(schedule.kind, schedule.rate, schedule.last_value, depth);
  }
}

std::vector<double> AdapterConfig::layer_scales(std::size_t depth) const {
  if (!layerwise_values.empty()) return layerwise_values;
  return layerwise_scale_schedule(schedule.kind, schedule.rate, schedule.last_value, depth);
}

MlpParams add_mlp_params(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                         std::size_t hidden, Rng& rng) {
  store.add(prefix + "norm.gain", Tensor({1, dim}, 1.0), false);
  store.add(prefix + "norm.bias", Tensor({1, dim}, 0.0), false);
  store.add(prefix + "fc1.weight", ad::xavier_uniform(dim, hidden, rng));
  store.add(prefix + "fc1.bias", Tensor({1, hidden}, 0.0), false);
  store.add(prefix + "fc2.weight", ad::xavier_uniform(hidden, dim, rng));
  store.add(prefix + "fc2.bias", Tensor({1, dim}, 0.0), false);
  return bind_mlp(store, prefix);
}

MlpParams bind_mlp(ad::ParamStore& store, const std::string& prefix) {
  MlpParams p;
  p.norm_gain = &store.get(prefix + "norm.gain");
  p.norm_bias = &store.get(prefix + "norm.bias");
  p.fc1_w = &store.get(prefix + "fc1.weight");
  p.fc1_b = &store.get(prefix + "fc1.bias");
  p.fc2_w = &store.get(prefix + "fc2.weight");
  p.fc2_b = &store.get(prefix + "fc2.bias");
  return p;
}

namespace {

std::size_t ps_input_width(PsInputMode mode, std::size_t dim) {
  return mode == PsInputMode::concat ? 2 * dim : dim;
}

}  // namespace

AdapterParams init_adapter(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                           const AdapterConfig& config, std::size_t layer_index,
                           std::size_t depth, Rng& rng) {
  const std::size_t r = config.middle_dim;
  if (r < 1) throw std::invalid_argument("adapter: middle_dim must be >= 1");
  store.add(prefix + "norm.gain", Tensor({1, dim}, 1.0), false);
  store.add(prefix + "norm.bias", Tensor({1, dim}, 0.0), false);
  store.add(prefix + "down.weight", ad::kaiming_normal(dim, r, rng));
  store.add(prefix + "down.bias", Tensor({1, r}, 0.0), false);
  store.add(prefix + "up.weight", Tensor({r, dim}, 0.0));
  store.add(prefix + "up.bias", Tensor({1, dim}, 0.0), false);
  if (config.scale_mode == ScaleMode::patchwise) {
    store.add(prefix + "ps.weight", Tensor({ps_input_width(config.ps_input, dim), 1}, 0.0));
  } else {
    const std::vector<double> scales = config.layer_scales(depth);
    Param& s = store.add(prefix + "scale", Tensor::scalar(scales.at(layer_index)), false);
    s.trainable = config.scale_mode == ScaleMode::layerwise_learnable;
  }
  return bind_adapter(store, prefix, config);
}

AdapterParams bind_adapter(ad::ParamStore& store, const std::string& prefix,
                           const AdapterConfig& config) {
  AdapterParams p;
  p.norm_gain = &store.get(prefix + "norm.gain");
  p.norm_bias = &store.get(prefix + "norm.bias");
  p.down_w = &store.get(prefix + "down.weight");
  p.down_b = &store.get(prefix + "down.bias");
  p.up_w = &store.get(prefix + "up.weight");
  p.up_b = &store.get(prefix + "up.bias");
  if (config.scale_mode == ScaleMode::patchwise) {
    p.ps_w = &store.get(prefix + "ps.weight");
  } else {
    p.scale = &store.get(prefix + "scale");
  }
  return p;
}

Var mlp_branch_forward(ad::Tape& tape, Var x, const MlpParams& p) {
  Var h = ad::layer_norm(tape, x, *p.norm_gain, *p.norm_bias);
  h = ad::gelu(ad::linear(tape, h, *p.fc1_w, p.fc1_b));
  return ad::linear(tape, h, *p.fc2_w, p.fc2_b);
}

Var vanilla_adapter_forward(ad::Tape& tape, Var x, const AdapterParams& p) {
  const std::size_t d = x.cols();
  if (p.down_w->value.rows() != d || p.up_w->value.cols() != d ||
      p.down_w->value.cols() != p.up_w->value.rows()) {
    throw ad::ShapeError("vanilla_adapter_forward", p.down_w->value.shape(),
                         p.up_w->value.shape());
  }
  Var h = ad::layer_norm(tape, x, *p.norm_gain, *p.norm_bias);
  h = ad::relu(ad::linear(tape, h, *p.down_w, p.down_b));
  return ad::linear(tape, h, *p.up_w, p.up_b);
}

Var patch_scale_forward(ad::Tape& tape, Var x_mlp, Var x_adapt, Param& ps_w, PsInputMode mode) {
  if (x_mlp.shape() != x_adapt.shape()) {
    throw ad::ShapeError("patch_scale_forward", x_mlp.shape(), x_adapt.shape());
  }
  const std::size_t d = x_mlp.cols();
  if (ps_w.value.rows() != ps_input_width(mode, d) || ps_w.value.cols() != 1) {
    throw ad::ShapeError("patch_scale_forward(" + to_string(mode) + ")", ps_w.value.shape(),
                         ad::Shape{ps_input_width(mode, d), 1});
  }
  Var input;
  switch (mode) {
    case PsInputMode::concat: input = ad::concat_cols({x_mlp, x_adapt}); break;
    case PsInputMode::sum: input = ad::add(x_mlp, x_adapt); break;
    case PsInputMode::adapt_only: input = x_adapt; break;
    case PsInputMode::mlp_only: input = x_mlp; break;
  }
  return ad::sigmoid(ad::linear(tape, input, ps_w, nullptr));
}

PatchAdaptOutput patch_adapt_mlp_forward(ad::Tape& tape, Var x, const MlpParams& mlp,
                                         const AdapterParams* adapter, const AdapterConfig& config,
                                         std::optional<double> scale_override) {
  PatchAdaptOutput out;
  out.x_mlp = mlp_branch_forward(tape, x, mlp);
  if (!config.enabled) {
    out.out = out.x_mlp;
    return out;
  }
  if (adapter == nullptr) throw std::invalid_argument("patch_adapt_mlp_forward: missing adapter");
  out.x_adapt = vanilla_adapter_forward(tape, x, *adapter);
  if (scale_override) {
    out.scale = tape.constant(Tensor::scalar(*scale_override));
  } else if (config.scale_mode == ScaleMode::patchwise) {
    out.scale = patch_scale_forward(tape, out.x_mlp, out.x_adapt, *adapter->ps_w, config.ps_input);
  } else {
    out.scale = tape.param(*adapter->scale);
  }
  out.out = ad::add(out.x_mlp, ad::mul(out.x_adapt, out.scale));
  return out;
}

std::uint64_t count_adapter_params(const AdapterConfig& config, std::size_t dim,
                                   std::size_t depth) {
  if (!config.enabled) return 0;
  const std::uint64_t d = dim, r = config.middle_dim;
  std::uint64_t per_layer = 2 * d + d * r + r + r * d + d;
  if (config.scale_mode == ScaleMode::patchwise) per_layer += ps_input_width(config.ps_input, dim);
  return per_layer * depth;
}

}  // namespace padmae::adapter
