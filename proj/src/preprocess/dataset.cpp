// SPDX-License-Identifier: Apache-2.0
#include "padmae/preprocess/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <thread>

#include "padmae/core/hash.hpp"
#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/image_io.hpp"

namespace padmae::preprocess {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json box_json(const RoIBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

RoIBox box_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

}  // namespace

std::vector<CacheRecord> read_roi_cache(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read RoI cache " + path.string());
  std::vector<CacheRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CacheRecord r;
      r.path = j.at("path").get<std::string>();
      r.width = j.at("width").get<std::size_t>();
      r.height = j.at("height").get<std::size_t>();
      for (const json& b : j.at("boxes")) r.boxes.push_back(box_from(b));
      r.fingerprint = j.at("fingerprint").get<std::string>();
      r.image_hash = j.value("image_hash", "");
      for (const RoIBox& b : r.boxes) {
        if (!b.inside(static_cast<double>(r.width), static_cast<double>(r.height))) {
          throw std::runtime_error("box outside recorded image size");
        }
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_roi_cache(const fs::path& path, const std::vector<CacheRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write RoI cache " + path.string());
  for (const CacheRecord& r : records) {
    json boxes = json::array();
    for (const RoIBox& b : r.boxes) boxes.push_back(box_json(b));
    json j = {{"path", r.path},
              {"width", r.width},
              {"height", r.height},
              {"boxes", boxes},
              {"fingerprint", r.fingerprint},
              {"image_hash", r.image_hash}};
    out << j.dump() << "\n";
  }
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  const json j = json::parse(in);
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1) {
    throw std::runtime_error("unsupported manifest schema " + std::to_string(m.schema_version));
  }
  for (const json& e : j.at("entries")) {
    m.entries.push_back({e.at("path").get<std::string>(), e.at("dataset").get<std::string>(),
                         e.at("cache_index").get<std::size_t>()});
  }
  for (int c = 0; c < 3; ++c) {
    m.mean[c] = j.at("mean").at(c).get<double>();
    m.std[c] = j.at("std").at(c).get<double>();
    if (!std::isfinite(m.mean[c]) || !std::isfinite(m.std[c]) || m.std[c] <= 0.0) {
      throw std::runtime_error("manifest mean/std must be finite with positive std");
    }
  }
  m.stride = j.at("subsample").at("stride").get<std::size_t>();
  m.cache_file = j.at("cache_file").get<std::string>();
  m.fingerprint = j.at("fingerprint").get<std::string>();
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  json entries = json::array();
  for (const ManifestEntry& e : m.entries) {
    entries.push_back({{"path", e.path}, {"dataset", e.dataset}, {"cache_index", e.cache_index}});
  }
  json j = {{"schema_version", m.schema_version},
            {"entries", entries},
            {"mean", m.mean},
            {"std", m.std},
            {"subsample", {{"rule", "every_nth_frame"}, {"stride", m.stride}}},
            {"cache_file", m.cache_file},
            {"fingerprint", m.fingerprint}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

namespace {

std::string read_file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

DatasetManifest prepare_dataset(const PrepareOptions& opt, PrepareStats* stats_out) {
  if (!fs::is_directory(opt.data_dir)) {
    throw std::runtime_error("data directory not found: " + opt.data_dir.string());
  }
  if (opt.stride == 0) throw std::invalid_argument("stride must be >= 1");
  std::map<fs::path, std::vector<fs::path>> sequences;
  for (const auto& e : fs::recursive_directory_iterator(opt.data_dir)) {
    if (e.is_regular_file() && is_supported_image(e.path())) {
      sequences[e.path().parent_path()].push_back(e.path());
    }
  }
  std::vector<std::pair<fs::path, std::string>> files;
  for (auto& [dir, list] : sequences) {
    std::sort(list.begin(), list.end());
    std::string tag = fs::relative(dir, opt.data_dir).generic_string();
    if (tag == ".") tag = opt.data_dir.filename().string();
    for (std::size_t i : subsample_frames(list.size(), opt.stride)) files.emplace_back(list[i], tag);
  }
  if (files.empty()) throw std::runtime_error("no images found in " + opt.data_dir.string());

  fs::create_directories(opt.out_dir);
  const fs::path cache_path = opt.out_dir / "roi_cache.jsonl";
  const std::string fp = proposer_fingerprint(opt.proposer);
  std::map<std::string, CacheRecord> previous;
  if (fs::exists(cache_path)) {
    try {
      for (CacheRecord& r : read_roi_cache(cache_path)) previous[r.path] = std::move(r);
    } catch (const std::exception& e) {
      std::cerr << "warning: ignoring unreadable RoI cache: " << e.what() << "\n";
    }
  }

  PrepareStats stats;
  stats.scanned = files.size();
  const std::size_t n = files.size();
  std::vector<std::optional<CacheRecord>> records(n);
  std::vector<std::array<double, 6>> sums(n);  // per-channel sum and sum of squares
  std::vector<double> pixels(n, 0.0);
  std::vector<std::string> errors(n);
  std::vector<char> reused(n, 0);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const std::string path = fs::absolute(files[i].first).lexically_normal().string();
      try {
        const std::string bytes = read_file_bytes(files[i].first);
        const std::string hash = sha256_hex(bytes);
        const Image img = load_image(files[i].first);
        auto& s = sums[i];
        s.fill(0.0);
        for (std::size_t p = 0; p < img.width * img.height; ++p)
          for (int c = 0; c < 3; ++c) {
            const double v = img.data[p * 3 + c];
            s[c] += v;
            s[3 + c] += v * v;
          }
        pixels[i] = static_cast<double>(img.width * img.height);
        auto it = previous.find(path);
        if (it != previous.end() && it->second.fingerprint == fp && it->second.image_hash == hash) {
          records[i] = it->second;
          reused[i] = 1;
          continue;
        }
        CacheRecord r;
        r.path = path;
        r.width = img.width;
        r.height = img.height;
        r.boxes = selective_search(img, opt.proposer);
        r.fingerprint = fp;
        r.image_hash = hash;
        records[i] = std::move(r);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, n));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  DatasetManifest m;
  m.stride = opt.stride;
  m.fingerprint = fp;
  std::vector<CacheRecord> cache;
  std::array<double, 6> total{};
  double count = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!records[i]) {
      ++stats.failed;
      const std::string msg = "failed to load " + files[i].first.string() + ": " + errors[i];
      if (opt.on_error == ErrorPolicy::abort) throw std::runtime_error(msg);
      std::cerr << "warning: " << msg << " (skipped)\n";
      continue;
    }
    if (reused[i]) ++stats.reused;
    else ++stats.recomputed;
    for (int k = 0; k < 6; ++k) total[k] += sums[i][k];
    count += pixels[i];
    m.entries.push_back({records[i]->path, files[i].second, cache.size()});
    cache.push_back(std::move(*records[i]));
  }
  if (m.entries.empty()) throw std::runtime_error("no loadable images in " + opt.data_dir.string());
  for (int c = 0; c < 3; ++c) {
    m.mean[c] = total[c] / count;
    const double var = std::max(total[3 + c] / count - m.mean[c] * m.mean[c], 0.0);
    m.std[c] = std::max(std::sqrt(var), 1e-6);
  }
  write_roi_cache(cache_path, cache);
  write_manifest(opt.out_dir / "manifest.json", m);
  if (stats_out) *stats_out = stats;
  return m;
}

Dataset load_dataset(const fs::path& manifest_path, ErrorPolicy on_error) {
  const DatasetManifest m = read_manifest(manifest_path);
  const std::vector<CacheRecord> cache =
      read_roi_cache(manifest_path.parent_path() / m.cache_file);
  Dataset ds;
  ds.mean = m.mean;
  ds.std = m.std;
  for (const ManifestEntry& e : m.entries) {
    if (e.cache_index >= cache.size()) {
      throw std::runtime_error("manifest entry " + e.path + " points past the RoI cache");
    }
    try {
      Image img = load_image(e.path);
      const CacheRecord& r = cache[e.cache_index];
      if (r.width != img.width || r.height != img.height) {
        throw std::runtime_error("size differs from the RoI cache record");
      }
      ds.images.push_back(std::move(img));
      ds.rois.push_back(r.boxes);
      ds.paths.push_back(e.path);
    } catch (const std::exception& ex) {
      if (on_error == ErrorPolicy::abort) throw std::runtime_error(e.path + ": " + ex.what());
      std::cerr << "warning: skipping " << e.path << ": " << ex.what() << "\n";
    }
  }
  if (ds.images.empty()) throw std::runtime_error("dataset is empty: " + manifest_path.string());
  return ds;
}

Image normalize_image(const Image& image, const std::array<double, 3>& mean,
                      const std::array<double, 3>& std) {
  Image out = image;
  for (std::size_t i = 0; i < image.width * image.height; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.data[i * 3 + c] = (image.data[i * 3 + c] - mean[c]) / std[c];
  return out;
}

}  // namespace padmae::preprocess
