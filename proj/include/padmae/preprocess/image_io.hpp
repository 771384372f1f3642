// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "padmae/core/image.hpp"

namespace padmae::preprocess {

class ImageLoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads PNG, JPEG or PGM (8/16-bit gray, 8/16-bit RGB). Values are scaled to
/// [0, 1] by the format's maximum and gray inputs are replicated to 3 channels.
Image load_image(const std::filesystem::path& path);

bool is_supported_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG. Channels 1 or 3; values are clamped to [0, 1] and
/// rounded to the nearest level.
void save_png(const std::filesystem::path& path, const Image& image);

/// Writes a gray PNG at 8 or 16 bits from raw levels (row-major).
void save_png_gray(const std::filesystem::path& path, std::size_t width, std::size_t height,
                   const std::vector<std::uint16_t>& levels, int bit_depth);

/// Writes a binary PGM (P5), 8-bit when maxval < 256 else 16-bit big-endian.
void save_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
              const std::vector<std::uint16_t>& levels, std::uint16_t maxval);

/// Writes a baseline JPEG (quality 0..100) of a 3-channel image.
void save_jpeg(const std::filesystem::path& path, const Image& image, int quality = 95);

/// Replicates a single-channel image to three channels; 3-channel input is returned as is.
Image to_rgb(const Image& image);

/// Mean over channels, same size, one channel.
Image to_gray(const Image& image);

}  // namespace padmae::preprocess
