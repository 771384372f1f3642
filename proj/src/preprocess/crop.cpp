// SPDX-License-Identifier: Apache-2.0
#include "padmae/preprocess/crop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace padmae::preprocess {

void CropConfig::validate() const {
  if (max_iterations == 0) throw std::invalid_argument("crop: max_iterations must be >= 1");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) {
    throw std::invalid_argument("crop: need 0 < scale_lo <= scale_hi");
  }
  if (!(large_roi_prob >= 0.0 && large_roi_prob <= 1.0)) {
    throw std::invalid_argument("crop: large_roi_prob must lie in [0, 1]");
  }
  if (!(translate_frac >= 0.0) || !(l_min >= 0.0) || output_size == 0) {
    throw std::invalid_argument("crop: invalid translate_frac, l_min or output_size");
  }
}

CropResult random_roi_crop(std::size_t width, std::size_t height, std::span<const RoIBox> rois,
                           const CropConfig& cfg, Rng& rng, bool keep_trace) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double A = W * H;
  CropResult res;
  res.large_roi = rng.bernoulli(cfg.large_roi_prob);
  if (!rois.empty()) {
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      const std::size_t j = rng.uniform_index(rois.size());
      const RoIBox& r = rois[j];
      const double xc = r.x + 0.5 * r.w;
      const double yc = r.y + 0.5 * r.h;
      double xc2 = xc, yc2 = yc, w2 = r.w, h2 = r.h;
      if (cfg.jitter) {
        xc2 = rng.uniform(xc - cfg.translate_frac * r.w, xc + cfg.translate_frac * r.w);
        yc2 = rng.uniform(yc - cfg.translate_frac * r.h, yc + cfg.translate_frac * r.h);
        w2 = rng.uniform(cfg.scale_lo * r.w, cfg.scale_hi * r.w);
        h2 = rng.uniform(cfg.scale_lo * r.h, cfg.scale_hi * r.h);
      }
      if (keep_trace) res.trace.push_back({j, xc, yc, r.w, r.h, xc2, yc2, w2, h2});
      double x0 = xc2 - 0.5 * w2, y0 = yc2 - 0.5 * h2;
      double x1 = x0 + w2, y1 = y0 + h2;
      x0 = std::max(x0, 0.0);
      y0 = std::max(y0, 0.0);
      x1 = std::min(x1, W);
      y1 = std::min(y1, H);
      const double cw = x1 - x0, chh = y1 - y0;
      if (cw < cfg.l_min || chh < cfg.l_min) continue;
      const double ratio = cw * chh / A;
      if (res.large_roi && ratio < cfg.ratio_min) continue;
      res.box = {x0, y0, cw, chh};
      return res;
    }
  }
  res.fallback = true;
  res.box = random_resized_crop(width, height, rng);
  return res;
}

RoIBox random_resized_crop(std::size_t width, std::size_t height, Rng& rng,
                           const ResizedCropParams& p) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double area = W * H;
  const double log_lo = std::log(p.aspect_lo), log_hi = std::log(p.aspect_hi);
  for (std::size_t a = 0; a < p.attempts; ++a) {
    const double target = area * rng.uniform(p.area_lo, p.area_hi);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const double w = std::round(std::sqrt(target * aspect));
    const double h = std::round(std::sqrt(target / aspect));
    if (w > 0 && h > 0 && w <= W && h <= H) {
      const double x = static_cast<double>(rng.uniform_index(static_cast<std::size_t>(W - w) + 1));
      const double y = static_cast<double>(rng.uniform_index(static_cast<std::size_t>(H - h) + 1));
      return {x, y, w, h};
    }
  }
  const double in_ratio = W / H;
  double w = W, h = H;
  if (in_ratio < p.aspect_lo) {
    h = std::round(w / p.aspect_lo);
  } else if (in_ratio > p.aspect_hi) {
    w = std::round(h * p.aspect_hi);
  }
  w = std::min(w, W);
  h = std::min(h, H);
  return {std::floor((W - w) / 2.0), std::floor((H - h) / 2.0), w, h};
}

Image crop_and_resize(const Image& image, const RoIBox& box, std::size_t size) {
  Image out(size, size, image.channels);
  const double sx = box.w / static_cast<double>(size), sy = box.h / static_cast<double>(size);
  const double maxx = static_cast<double>(image.width) - 1.0;
  const double maxy = static_cast<double>(image.height) - 1.0;
  for (std::size_t oy = 0; oy < size; ++oy) {
    const double fy = std::clamp(box.y + (static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, maxy);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < size; ++ox) {
      const double fx = std::clamp(box.x + (static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, maxx);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
        const double bot = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
        out.at(oy, ox, c) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

std::vector<std::size_t> subsample_frames(std::size_t count, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("subsample_frames: stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; i += stride) out.push_back(i);
  return out;
}

}  // namespace padmae::preprocess
