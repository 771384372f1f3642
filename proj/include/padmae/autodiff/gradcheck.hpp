// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "padmae/autodiff/tape.hpp"

namespace padmae::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  /// The floor keeps near-zero gradients from being judged on roundoff alone.
  double denom_floor = 1e-3;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  bool trainable = true;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = true;
  /// Every checked scalar, trainable and frozen alike. Frozen params always
  /// report an analytic gradient of 0 and are excluded from max_rel_error.
  std::vector<GradCheckEntry> entries;
};

/// Builds a scalar loss on a fresh tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `params` against central differences
/// (f(w+h) - f(w-h)) / 2h. Throws std::runtime_error when two identical
/// evaluations of the loss differ.
GradCheckReport finite_difference_check(std::span<Param* const> params, const LossBuilder& loss,
                                        const GradCheckOptions& options = {});

}  // namespace padmae::ad
