// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "padmae/autodiff/tensor.hpp"
#include "padmae/core/rng.hpp"

namespace padmae::ad {

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), shape fan_in x fan_out.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// N(0, 2 / fan_in): Kaiming-normal with the ReLU gain, shape fan_in x fan_out.
Tensor kaiming_normal(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// N(0, std^2) entries.
Tensor normal(Shape shape, double stddev, Rng& rng);

}  // namespace padmae::ad
