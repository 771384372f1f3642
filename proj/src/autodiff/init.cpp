// SPDX-License-Identifier: Apache-2.0
#include "padmae/autodiff/init.hpp"

#include <cmath>

namespace padmae::ad {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& v : t.storage()) v = rng.uniform(-a, a);
  return t;
}

Tensor kaiming_normal(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return normal({fan_in, fan_out}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Tensor normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = stddev * rng.normal();
  return t;
}

}  // namespace padmae::ad
