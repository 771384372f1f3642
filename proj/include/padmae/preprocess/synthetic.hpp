// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "padmae/core/image.hpp"
#include "padmae/core/rng.hpp"
#include "padmae/preprocess/roi.hpp"

namespace padmae::preprocess {

/// Source-domain stand-in: colored gradients, oriented gratings and rectangles.
Image textured_rgb(std::size_t size, Rng& rng);

struct SceneSample {
  Image image;
  std::vector<RoIBox> objects;  ///< ground-truth boxes of the bright objects
};

/// Target-domain stand-in: a dim noisy background with Gaussian hot spots,
/// gray replicated to three channels.
SceneSample thermal_scene(std::size_t size, Rng& rng);

/// Two bright squares on a dark ground, non-overlapping, with mild noise.
SceneSample two_blob_image(std::size_t size, Rng& rng);

enum class CorpusKind { textured, thermal };

CorpusKind parse_corpus_kind(std::string_view s);

/// Writes count PNG files img_00000.png ... into dir; image i is drawn from
/// derive_seed(seed, "corpus", i) so any prefix of a corpus is stable.
std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, CorpusKind kind,
                                                std::size_t count, std::size_t size,
                                                std::uint64_t seed);

Image corpus_image(CorpusKind kind, std::size_t size, std::uint64_t seed, std::size_t index);

}  // namespace padmae::preprocess
