// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace padmae::train {

OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adamw ? "adamw" : "sgd"; }

void OptimizerConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("optimizer: base_lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw std::invalid_argument("optimizer: batch_size must be >= 1");
}

double effective_lr(double base_lr, std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("effective_lr: batch_size must be >= 1");
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

namespace {

void check_finite(const ad::Param& p) {
  if (!p.grad.all_finite()) {
    throw std::runtime_error("optimizer: non-finite gradient in " + p.name);
  }
}

}  // namespace

void sgd_step(ad::Param& p, double lr) {
  check_finite(p);
  for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] -= lr * p.grad[i];
}

void adamw_step(ad::Param& p, MomentState& s, double lr, const OptimizerConfig& cfg) {
  check_finite(p);
  if (s.m.numel() != p.value.numel()) {
    s.m = ad::Tensor::zeros(p.value.shape());
    s.v = ad::Tensor::zeros(p.value.shape());
    s.step = 0;
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = p.weight_decay ? cfg.weight_decay : 0.0;
  for (std::size_t i = 0; i < p.value.numel(); ++i) {
    const double g = p.grad[i];
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    p.value[i] -= lr * decay * p.value[i];
    p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<ad::Param* const> params, double lr) {
  for (ad::Param* p : params) {
    if (!p->trainable) continue;
    const double plr = lr * p->lr_scale;
    if (config_.kind == OptimizerKind::sgd) {
      sgd_step(*p, plr);
    } else {
      adamw_step(*p, moments_[p->name], plr, config_);
    }
  }
}

}  // namespace padmae::train
