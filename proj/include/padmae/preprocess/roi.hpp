// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>

namespace padmae::preprocess {

/// Axis-aligned box, top-left (x, y) and extent (w, h) in pixels.
struct RoIBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }

  bool inside(double width, double height) const {
    return x >= 0.0 && y >= 0.0 && x + w <= width && y + h <= height && w >= 1.0 && h >= 1.0;
  }

  friend bool operator==(const RoIBox&, const RoIBox&) = default;
};

inline double iou(const RoIBox& a, const RoIBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace padmae::preprocess
