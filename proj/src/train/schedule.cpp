// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace padmae::train {

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "cosine_warmup") return ScheduleKind::cosine_warmup;
  if (s == "step") return ScheduleKind::step;
  if (s == "linear") return ScheduleKind::linear;
  throw std::invalid_argument("unknown lr schedule '" + std::string(s) + "'");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::cosine_warmup: return "cosine_warmup";
    case ScheduleKind::step: return "step";
    case ScheduleKind::linear: return "linear";
  }
  return "?";
}

void ScheduleConfig::validate() const {
  if (warmup_epochs > total_epochs) {
    throw std::invalid_argument("schedule: warmup_epochs exceeds total_epochs");
  }
  if (layerwise_decay_rate && !(*layerwise_decay_rate > 0.0 && *layerwise_decay_rate <= 1.0)) {
    throw std::invalid_argument("schedule: layerwise_decay_rate must lie in (0, 1]");
  }
}

namespace {

void check_steps(std::size_t step, std::size_t warmup, std::size_t total) {
  if (total < warmup) throw std::invalid_argument("lr schedule: total_steps < warmup_steps");
  if (step > total) throw std::invalid_argument("lr schedule: step beyond total_steps");
}

}  // namespace

double cosine_warmup_lr(std::size_t step, std::size_t warmup, std::size_t total, double peak) {
  check_steps(step, warmup, total);
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return peak;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  if (progress >= 1.0) return 0.0;
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double linear_lr(std::size_t step, std::size_t warmup, std::size_t total, double peak) {
  check_steps(step, warmup, total);
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return peak;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double step_lr(std::size_t step, std::size_t warmup, const std::vector<std::size_t>& milestones,
               double peak) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const auto passed = std::count_if(milestones.begin(), milestones.end(),
                                    [step](std::size_t m) { return step >= m; });
  return peak * std::pow(0.1, static_cast<double>(passed));
}

double scheduled_lr(const ScheduleConfig& cfg, std::size_t step, std::size_t steps_per_epoch,
                    double peak) {
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  const std::size_t total = cfg.total_epochs * steps_per_epoch;
  switch (cfg.kind) {
    case ScheduleKind::cosine_warmup: return cosine_warmup_lr(std::min(step, total), warmup, total, peak);
    case ScheduleKind::linear: return linear_lr(std::min(step, total), warmup, total, peak);
    case ScheduleKind::step: {
      std::vector<std::size_t> ms;
      for (std::size_t e : cfg.step_milestones) ms.push_back(e * steps_per_epoch);
      return step_lr(step, warmup, ms, peak);
    }
  }
  return peak;
}

std::vector<double> layerwise_decay_lrs(double base_lr, double rate, std::size_t depth) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("layerwise_decay_lrs: rate must lie in (0, 1]");
  }
  std::vector<double> out(depth + 2);
  for (std::size_t l = 0; l <= depth; ++l) {
    out[l] = base_lr * std::pow(rate, static_cast<double>(depth - l));
  }
  out[depth + 1] = base_lr;
  return out;
}

}  // namespace padmae::train
