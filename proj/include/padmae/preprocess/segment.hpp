// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "padmae/core/image.hpp"
#include "padmae/preprocess/roi.hpp"

namespace padmae::preprocess {

struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint32_t> labels;  ///< row-major, values 0..num_regions-1
  std::size_t num_regions = 0;
};

struct SegmentParams {
  double k = 200.0;
  std::size_t min_size = 50;
  double sigma = 0.8;
};

/// Graph-based segmentation over 8-connected pixel edges. Intensities are the
/// channel mean on a 0..255 scale after a Gaussian blur of width sigma.
/// Labels are numbered in raster order of first appearance.
LabelMap felzenszwalb_segment(const Image& image, const SegmentParams& params = {});

/// Gray 0..255 intensities blurred with a separable Gaussian (radius ceil(4 sigma)).
std::vector<double> smoothed_intensity(const Image& image, double sigma);

struct SelectiveSearchParams {
  SegmentParams segment;
  std::size_t histogram_bins = 25;
};

/// Hierarchical grouping of the initial segmentation. Similarity between
/// adjacent regions is histogram intersection + size complementarity + fill.
/// Every region ever formed contributes its bounding box; duplicates dropped.
std::vector<RoIBox> selective_search(const Image& image, const SelectiveSearchParams& params = {});

/// Stable identifier of the proposer settings, stored with every cache line.
std::string proposer_fingerprint(const SelectiveSearchParams& params);

}  // namespace padmae::preprocess
