// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "padmae/autodiff/ops.hpp"
#include "padmae/autodiff/param.hpp"
#include "padmae/core/rng.hpp"

namespace padmae::adapter {

/// How the fusion scale s of x' = x_mlp + s * x_adapt is produced.
enum class ScaleMode { patchwise, layerwise_frozen, layerwise_learnable };

/// What the patchwise-scale linear layer sees.
enum class PsInputMode { concat, sum, adapt_only, mlp_only };

enum class ScheduleKind { constant, exp_decay, even_decay };

/// Smallest per-layer value produced by the even-decay schedule.
inline constexpr double kEvenDecayFloor = 0.04;

struct ScaleSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double rate = 0.8;
  /// Value of the deepest layer; for `constant`, the value of every layer.
  double last_value = 1.0;
};

struct AdapterConfig {
  bool enabled = true;
  std::size_t middle_dim = 64;
  ScaleMode scale_mode = ScaleMode::patchwise;
  PsInputMode ps_input = PsInputMode::concat;
  ScaleSchedule schedule;
  /// Explicit per-layer scales; overrides `schedule` when non-empty.
  std::vector<double> layerwise_values;

  void validate(std::size_t depth) const;
  /// Initial per-layer scale for the layerwise modes.
  std::vector<double> layer_scales(std::size_t depth) const;
};

std::string to_string(ScaleMode m);
std::string to_string(PsInputMode m);
std::string to_string(ScheduleKind k);
ScaleMode parse_scale_mode(std::string_view s);
PsInputMode parse_ps_input_mode(std::string_view s);
ScheduleKind parse_schedule_kind(std::string_view s);

/// Per-layer scalars for layer l = 1..depth:
///   constant   -> last_value
///   exp_decay  -> last_value * rate^(depth - l)
///   even_decay -> max(last_value - (1 - rate) * (depth - l), kEvenDecayFloor)
std::vector<double> layerwise_scale_schedule(ScheduleKind kind, double rate, double last_value,
                                             std::size_t depth);

/// The transformer MLP sub-block: its LayerNorm and fc1 (d x 4d) / fc2 (4d x d).
struct MlpParams {
  ad::Param* norm_gain = nullptr;
  ad::Param* norm_bias = nullptr;
  ad::Param* fc1_w = nullptr;
  ad::Param* fc1_b = nullptr;
  ad::Param* fc2_w = nullptr;
  ad::Param* fc2_b = nullptr;
};

/// Vanilla adapter branch (own LayerNorm, down d x r, up r x d) plus the
/// patchwise-scale weight or the layerwise scale scalar, depending on mode.
struct AdapterParams {
  ad::Param* norm_gain = nullptr;
  ad::Param* norm_bias = nullptr;
  ad::Param* down_w = nullptr;
  ad::Param* down_b = nullptr;
  ad::Param* up_w = nullptr;
  ad::Param* up_b = nullptr;
  /// Bias-free (2d or d) x 1 weight; patchwise mode only.
  ad::Param* ps_w = nullptr;
  /// 1 x 1 scale; layerwise modes only (non-trainable when frozen).
  ad::Param* scale = nullptr;
};

/// Registers `<prefix>norm.*`, `<prefix>fc1.*`, `<prefix>fc2.*` with Xavier
/// weights and zero biases.
MlpParams add_mlp_params(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                         std::size_t hidden, Rng& rng);

/// Registers the adapter of one layer under `<prefix>` at its starting point:
/// down weight Kaiming-normal (fan-in d, ReLU gain), up weight and all biases
/// zero, PS weight zero, LayerNorm gain 1 / bias 0.
AdapterParams init_adapter(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                           const AdapterConfig& config, std::size_t layer_index,
                           std::size_t depth, Rng& rng);

/// Re-binds previously registered adapter params by name.
AdapterParams bind_adapter(ad::ParamStore& store, const std::string& prefix,
                           const AdapterConfig& config);
MlpParams bind_mlp(ad::ParamStore& store, const std::string& prefix);

/// x_mlp = MLP(LN(x)), pre-residual.
ad::Var mlp_branch_forward(ad::Tape& tape, ad::Var x, const MlpParams& p);

/// x_adapt = ReLU(LN_adapter(x) W_down + b_down) W_up + b_up.
ad::Var vanilla_adapter_forward(ad::Tape& tape, ad::Var x, const AdapterParams& p);

/// s = Sigmoid(input W_linear), one value per token (N x 1).
ad::Var patch_scale_forward(ad::Tape& tape, ad::Var x_mlp, ad::Var x_adapt, ad::Param& ps_w,
                            PsInputMode mode);

struct PatchAdaptOutput {
  ad::Var out;      ///< x' = x_mlp + s * x_adapt (caller adds the residual)
  ad::Var scale;    ///< N x 1 (patchwise) or 1 x 1 (layerwise); unset when disabled
  ad::Var x_mlp;
  ad::Var x_adapt;  ///< unset when disabled
};

/// PatchAdaptMLP. `adapter` may be null when config.enabled is false.
/// `scale_override` replaces s by a constant (inference-time scale swapping).
PatchAdaptOutput patch_adapt_mlp_forward(ad::Tape& tape, ad::Var x, const MlpParams& mlp,
                                         const AdapterParams* adapter, const AdapterConfig& config,
                                         std::optional<double> scale_override = std::nullopt);

/// Trainable adapter parameters of one encoder: per layer
/// 2d + dr + r + rd + d, plus 2d (concat) or d (other inputs) in patchwise mode.
std::uint64_t count_adapter_params(const AdapterConfig& config, std::size_t dim, std::size_t depth);

}  // namespace padmae::adapter
