// SPDX-License-Identifier: Apache-2.0
#include "padmae/preprocess/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include "padmae/preprocess/image_io.hpp"

namespace padmae::preprocess {

namespace fs = std::filesystem;

Image textured_rgb(std::size_t size, Rng& rng) {
  Image img(size, size, 3);
  const double s = static_cast<double>(size);
  double base[3], grad[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    grad[c] = rng.uniform(-0.3, 0.3);
  }
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(2.0, 6.0) * 2.0 * std::numbers::pi / s;
  const double amp = rng.uniform(0.05, 0.2);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (std::cos(angle) * x + std::sin(angle) * y) * freq;
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = base[c] + grad[c] * (static_cast<double>(y) / s - 0.5) +
                          amp * std::sin(u + c);
    }
  const std::size_t rects = 2 + rng.uniform_index(3);
  for (std::size_t r = 0; r < rects; ++r) {
    const double w = rng.uniform(0.15, 0.5) * s, h = rng.uniform(0.15, 0.5) * s;
    const double x0 = rng.uniform(0.0, s - w), y0 = rng.uniform(0.0, s - h);
    double col[3];
    for (double& c : col) c = rng.uniform();
    const bool striped = rng.bernoulli(0.5);
    for (std::size_t y = static_cast<std::size_t>(y0); y < static_cast<std::size_t>(y0 + h); ++y)
      for (std::size_t x = static_cast<std::size_t>(x0); x < static_cast<std::size_t>(x0 + w); ++x)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = striped && ((x / 2) % 2 == 0) ? 0.5 * col[c] : col[c];
  }
  for (double& v : img.data) v = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);
  return img;
}

SceneSample thermal_scene(std::size_t size, Rng& rng) {
  SceneSample out;
  const double s = static_cast<double>(size);
  std::vector<double> g(size * size);
  const double bg = rng.uniform(0.1, 0.35);
  const double tilt_y = rng.uniform(-0.15, 0.15);
  const double tilt_x = rng.uniform(-0.15, 0.15);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      g[y * size + x] = bg + tilt_y * (static_cast<double>(y) / s - 0.5) +
                        tilt_x * (static_cast<double>(x) / s - 0.5);
  const std::size_t blobs = 2 + rng.uniform_index(4);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double sigma = rng.uniform(0.1, 0.22) * s;
    const double cx = rng.uniform(0.1, 0.9) * s, cy = rng.uniform(0.1, 0.9) * s;
    const double peak = rng.uniform(0.35, 0.6);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / sigma;
        const double dy = (static_cast<double>(y) + 0.5 - cy) / sigma;
        g[y * size + x] += peak * std::exp(-0.5 * (dx * dx + dy * dy));
      }
    const double x0 = std::max(0.0, std::floor(cx - 2 * sigma));
    const double y0 = std::max(0.0, std::floor(cy - 2 * sigma));
    const double x1 = std::min(s, std::ceil(cx + 2 * sigma));
    const double y1 = std::min(s, std::ceil(cy + 2 * sigma));
    out.objects.push_back({x0, y0, x1 - x0, y1 - y0});
  }
  out.image = Image(size, size, 3);
  for (std::size_t i = 0; i < size * size; ++i) {
    const double v = std::clamp(g[i] + 0.004 * rng.normal(), 0.0, 1.0);
    for (int c = 0; c < 3; ++c) out.image.data[i * 3 + c] = v;
  }
  return out;
}

SceneSample two_blob_image(std::size_t size, Rng& rng) {
  SceneSample out;
  const double s = static_cast<double>(size);
  const double ground = rng.uniform(0.05, 0.25);
  std::vector<double> g(size * size, ground);
  while (out.objects.size() < 2) {
    const double side = std::round(rng.uniform(0.15, 0.3) * s);
    const double x = std::floor(rng.uniform(0.0, s - side));
    const double y = std::floor(rng.uniform(0.0, s - side));
    RoIBox box{x, y, side, side};
    // Keep a gap of two pixels so the squares never touch.
    RoIBox grown{x - 2, y - 2, side + 4, side + 4};
    if (!out.objects.empty() && iou(grown, out.objects[0]) > 0.0) continue;
    out.objects.push_back(box);
  }
  for (const RoIBox& b : out.objects) {
    const double level = rng.uniform(0.7, 0.95);
    for (std::size_t y = static_cast<std::size_t>(b.y); y < static_cast<std::size_t>(b.y + b.h); ++y)
      for (std::size_t x = static_cast<std::size_t>(b.x); x < static_cast<std::size_t>(b.x + b.w); ++x)
        g[y * size + x] = level;
  }
  out.image = Image(size, size, 3);
  for (std::size_t i = 0; i < size * size; ++i) {
    const double v = std::clamp(g[i] + 0.01 * rng.normal(), 0.0, 1.0);
    for (int c = 0; c < 3; ++c) out.image.data[i * 3 + c] = v;
  }
  return out;
}

CorpusKind parse_corpus_kind(std::string_view s) {
  if (s == "textured") return CorpusKind::textured;
  if (s == "thermal") return CorpusKind::thermal;
  throw std::invalid_argument("unknown corpus kind '" + std::string(s) + "'");
}

Image corpus_image(CorpusKind kind, std::size_t size, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, "corpus", index));
  return kind == CorpusKind::textured ? textured_rgb(size, rng) : thermal_scene(size, rng).image;
}

std::vector<fs::path> write_corpus(const fs::path& dir, CorpusKind kind, std::size_t count,
                                   std::size_t size, std::uint64_t seed) {
  fs::create_directories(dir);
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    const fs::path p = dir / name;
    Image img = corpus_image(kind, size, seed, i);
    if (kind == CorpusKind::thermal) img = to_gray(img);
    save_png(p, img);
    out.push_back(p);
  }
  return out;
}

}  // namespace padmae::preprocess
