// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "padmae/core/image.hpp"
#include "padmae/core/rng.hpp"
#include "padmae/preprocess/roi.hpp"

namespace padmae::preprocess {

struct CropConfig {
  std::size_t max_iterations = 20;  ///< M
  double l_min = 60.0;
  double translate_frac = 0.4;
  double scale_lo = 0.7;
  double scale_hi = 1.5;
  double ratio_min = 0.15;
  double large_roi_prob = 0.15;
  std::size_t output_size = 224;
  /// Ablation: take the chosen RoI as is (no center jitter, no rescaling).
  bool jitter = true;

  void validate() const;
};

struct ResizedCropParams {
  double area_lo = 0.2;
  double area_hi = 1.0;
  double aspect_lo = 3.0 / 4.0;
  double aspect_hi = 4.0 / 3.0;
  std::size_t attempts = 10;
};

/// Values of one Alg.-1 iteration before clamping, for range checks.
struct CropTrace {
  std::size_t roi_index = 0;
  double xc = 0, yc = 0, w = 0, h = 0;          ///< source RoI center and size
  double xc_new = 0, yc_new = 0, w_new = 0, h_new = 0;
};

struct CropResult {
  RoIBox box;
  bool fallback = false;
  bool large_roi = false;
  std::size_t iterations = 0;
  std::vector<CropTrace> trace;  ///< filled only when requested
};

CropResult random_roi_crop(std::size_t width, std::size_t height, std::span<const RoIBox> rois,
                           const CropConfig& cfg, Rng& rng, bool keep_trace = false);

RoIBox random_resized_crop(std::size_t width, std::size_t height, Rng& rng,
                           const ResizedCropParams& params = {});

/// Bilinear resample of the box to size x size (pixel-center alignment).
Image crop_and_resize(const Image& image, const RoIBox& box, std::size_t size);

/// Indices 0, stride, 2*stride, ... below count.
std::vector<std::size_t> subsample_frames(std::size_t count, std::size_t stride);

template <typename T>
std::vector<T> subsample_frames(const std::vector<T>& frames, std::size_t stride) {
  std::vector<T> out;
  for (std::size_t i : subsample_frames(frames.size(), stride)) out.push_back(frames[i]);
  return out;
}

}  // namespace padmae::preprocess
