// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "padmae/autodiff/param.hpp"

namespace padmae::train {

enum class OptimizerKind { adamw, sgd };

OptimizerKind parse_optimizer_kind(std::string_view s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
  std::size_t batch_size = 4096;

  void validate() const;
};

/// Linear scaling rule: base_lr * batch_size / 256.
double effective_lr(double base_lr, std::size_t batch_size);

struct MomentState {
  ad::Tensor m;
  ad::Tensor v;
  std::uint64_t step = 0;
};

/// w <- w - lr * g.
void sgd_step(ad::Param& p, double lr);

/// One decoupled-weight-decay Adam update; weight decay is skipped when
/// p.weight_decay is false.
void adamw_step(ad::Param& p, MomentState& state, double lr, const OptimizerConfig& cfg);

/// Applies one update to every trainable param, scaling `lr` by each param's
/// lr_scale. Moment state exists only for params that have been updated at
/// least once. A non-finite gradient aborts with the param name.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }
  void step(std::span<ad::Param* const> params, double lr);

  const std::map<std::string, MomentState>& moments() const { return moments_; }
  std::map<std::string, MomentState>& moments() { return moments_; }

 private:
  OptimizerConfig config_;
  std::map<std::string, MomentState> moments_;
};

}  // namespace padmae::train
