// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace padmae::train {

enum class ScheduleKind { cosine_warmup, step, linear };

ScheduleKind parse_schedule_kind(std::string_view s);
std::string to_string(ScheduleKind k);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::cosine_warmup;
  std::size_t warmup_epochs = 30;
  std::size_t total_epochs = 100;
  std::optional<double> layerwise_decay_rate;
  /// Epochs at which the step schedule multiplies the lr by 0.1.
  std::vector<std::size_t> step_milestones;

  void validate() const;
};

/// Linear 0 -> peak over warmup, then peak * 0.5 * (1 + cos(pi * progress)).
double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                        double peak);

/// Linear warmup, then linear decay to 0 at total_steps.
double linear_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double peak);

/// Linear warmup, then peak * 0.1^(milestones passed).
double step_lr(std::size_t step, std::size_t warmup_steps,
               const std::vector<std::size_t>& milestones, double peak);

/// lr at a step under `cfg`, with epoch quantities converted through
/// steps_per_epoch.
double scheduled_lr(const ScheduleConfig& cfg, std::size_t step, std::size_t steps_per_epoch,
                    double peak);

/// Entry 0 (embeddings): base * rate^depth; entry l in 1..depth:
/// base * rate^(depth - l); entry depth + 1 (final norm, heads, decoder): base.
std::vector<double> layerwise_decay_lrs(double base_lr, double rate, std::size_t depth);

}  // namespace padmae::train
