// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "padmae/core/image.hpp"
#include "padmae/preprocess/roi.hpp"
#include "padmae/preprocess/segment.hpp"

namespace padmae::preprocess {

struct CacheRecord {
  std::string path;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<RoIBox> boxes;
  std::string fingerprint;
  std::string image_hash;  ///< sha256 of the file bytes
};

/// One JSON object per line.
std::vector<CacheRecord> read_roi_cache(const std::filesystem::path& path);
void write_roi_cache(const std::filesystem::path& path, const std::vector<CacheRecord>& records);

struct ManifestEntry {
  std::string path;
  std::string dataset;
  std::size_t cache_index = 0;
};

struct DatasetManifest {
  int schema_version = 1;
  std::vector<ManifestEntry> entries;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
  std::size_t stride = 1;
  std::string cache_file = "roi_cache.jsonl";
  std::string fingerprint;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

enum class ErrorPolicy { skip, abort };

struct PrepareOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::size_t stride = 1;
  std::size_t threads = 1;
  SelectiveSearchParams proposer;
  ErrorPolicy on_error = ErrorPolicy::skip;
};

struct PrepareStats {
  std::size_t scanned = 0;
  std::size_t recomputed = 0;
  std::size_t reused = 0;
  std::size_t failed = 0;
};

/// Scans data_dir recursively. Each directory is one frame sequence sorted by
/// file name; the stride applies within a directory. Writes
/// out_dir/manifest.json and out_dir/roi_cache.jsonl, reusing cache lines whose
/// fingerprint and file hash still match.
DatasetManifest prepare_dataset(const PrepareOptions& options, PrepareStats* stats = nullptr);

/// In-memory corpus with candidate RoIs, loaded through a manifest.
struct Dataset {
  std::vector<Image> images;
  std::vector<std::vector<RoIBox>> rois;
  std::vector<std::string> paths;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  std::size_t size() const { return images.size(); }
};

Dataset load_dataset(const std::filesystem::path& manifest_path, ErrorPolicy on_error = ErrorPolicy::abort);

/// Per-channel (v - mean) / std.
Image normalize_image(const Image& image, const std::array<double, 3>& mean,
                      const std::array<double, 3>& std);

}  // namespace padmae::preprocess
