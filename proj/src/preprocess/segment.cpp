// SPDX-License-Identifier: Apache-2.0
#include "padmae/preprocess/segment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "padmae/core/hash.hpp"

namespace padmae::preprocess {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Joins two roots; the new internal difference is the joining edge weight.
  void join(std::size_t a, std::size_t b, double w) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = w;
  }

  std::size_t size(std::size_t root) const { return size_[root]; }
  double internal(std::size_t root) const { return internal_[root]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> internal_;
};

struct Edge {
  double w;
  std::uint32_t a, b;
};

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

std::vector<double> smoothed_intensity(const Image& image, double sigma) {
  const std::size_t w = image.width, h = image.height, ch = image.channels;
  std::vector<double> gray(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) s += image.data[i * ch + c];
    gray[i] = 255.0 * s / static_cast<double>(ch);
  }
  const std::vector<double> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  std::vector<double> tmp(w * h), out(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i)
        s += k[i + r] * gray[y * w + clampi(static_cast<int>(x) + i, static_cast<int>(w))];
      tmp[y * w + x] = s;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i)
        s += k[i + r] * tmp[clampi(static_cast<int>(y) + i, static_cast<int>(h)) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

LabelMap felzenszwalb_segment(const Image& image, const SegmentParams& params) {
  const std::size_t w = image.width, h = image.height;
  LabelMap map;
  map.width = w;
  map.height = h;
  if (w == 0 || h == 0) return map;
  const std::vector<double> v = smoothed_intensity(image, params.sigma);

  std::vector<Edge> edges;
  edges.reserve(w * h * 4);
  auto add = [&](std::size_t p, std::size_t q) {
    edges.push_back({std::abs(v[p] - v[q]), static_cast<std::uint32_t>(p),
                     static_cast<std::uint32_t>(q)});
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (x + 1 < w) add(p, p + 1);
      if (y + 1 < h) add(p, p + w);
      if (x + 1 < w && y + 1 < h) add(p, p + w + 1);
      if (x + 1 < w && y > 0) add(p, p - w + 1);
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });

  DisjointSet set(w * h);
  for (const Edge& e : edges) {
    std::size_t a = set.find(e.a), b = set.find(e.b);
    if (a == b) continue;
    const double ta = set.internal(a) + params.k / static_cast<double>(set.size(a));
    const double tb = set.internal(b) + params.k / static_cast<double>(set.size(b));
    if (e.w <= std::min(ta, tb)) set.join(a, b, e.w);
  }
  for (const Edge& e : edges) {
    std::size_t a = set.find(e.a), b = set.find(e.b);
    if (a != b && (set.size(a) < params.min_size || set.size(b) < params.min_size)) {
      set.join(a, b, e.w);
    }
  }

  map.labels.resize(w * h);
  std::map<std::size_t, std::uint32_t> ids;
  for (std::size_t p = 0; p < w * h; ++p) {
    const std::size_t root = set.find(p);
    auto [it, inserted] = ids.emplace(root, static_cast<std::uint32_t>(ids.size()));
    map.labels[p] = it->second;
  }
  map.num_regions = ids.size();
  return map;
}

namespace {

struct Region {
  double size = 0.0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive pixel bounds
  std::vector<double> hist;                // L1-normalized
  std::set<std::size_t> neighbors;
  bool alive = true;
};

double similarity(const Region& a, const Region& b, double image_area) {
  double inter = 0.0;
  for (std::size_t i = 0; i < a.hist.size(); ++i) inter += std::min(a.hist[i], b.hist[i]);
  const double size_term = 1.0 - (a.size + b.size) / image_area;
  const double bw = std::max(a.x1, b.x1) - std::min(a.x0, b.x0) + 1.0;
  const double bh = std::max(a.y1, b.y1) - std::min(a.y0, b.y0) + 1.0;
  const double fill_term = 1.0 - (bw * bh - a.size - b.size) / image_area;
  return inter + size_term + fill_term;
}

RoIBox box_of(const Region& r) { return {r.x0, r.y0, r.x1 - r.x0 + 1.0, r.y1 - r.y0 + 1.0}; }

}  // namespace

std::vector<RoIBox> selective_search(const Image& image, const SelectiveSearchParams& params) {
  const std::size_t w = image.width, h = image.height;
  if (w == 0 || h == 0) return {};
  const LabelMap seg = felzenszwalb_segment(image, params.segment);
  const std::size_t bins = std::max<std::size_t>(params.histogram_bins, 1);
  const std::vector<double> raw = smoothed_intensity(image, 0.0);

  std::vector<Region> regions(seg.num_regions);
  for (Region& r : regions) {
    r.hist.assign(bins, 0.0);
    r.x0 = static_cast<double>(w);
    r.y0 = static_cast<double>(h);
    r.x1 = r.y1 = -1.0;
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      Region& r = regions[seg.labels[p]];
      r.size += 1.0;
      r.x0 = std::min(r.x0, static_cast<double>(x));
      r.y0 = std::min(r.y0, static_cast<double>(y));
      r.x1 = std::max(r.x1, static_cast<double>(x));
      r.y1 = std::max(r.y1, static_cast<double>(y));
      const auto bin = std::min<std::size_t>(
          static_cast<std::size_t>(raw[p] / 256.0 * static_cast<double>(bins)), bins - 1);
      r.hist[bin] += 1.0;
      auto link = [&](std::size_t q) {
        const std::uint32_t a = seg.labels[p], b = seg.labels[q];
        if (a != b) {
          regions[a].neighbors.insert(b);
          regions[b].neighbors.insert(a);
        }
      };
      if (x + 1 < w) link(p + 1);
      if (y + 1 < h) link(p + w);
      if (x + 1 < w && y + 1 < h) link(p + w + 1);
      if (x + 1 < w && y > 0) link(p - w + 1);
    }
  }
  for (Region& r : regions)
    for (double& v : r.hist) v /= r.size;

  const double area = static_cast<double>(w * h);
  // Pairs keyed (i, j) with i < j; the best pair is the max similarity, ties
  // broken by the smallest pair.
  std::map<std::pair<std::size_t, std::size_t>, double> sims;
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t j : regions[i].neighbors)
      if (i < j) sims[{i, j}] = similarity(regions[i], regions[j], area);

  std::vector<RoIBox> boxes;
  for (const Region& r : regions) boxes.push_back(box_of(r));

  while (!sims.empty()) {
    auto best = sims.begin();
    for (auto it = sims.begin(); it != sims.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [i, j] = best->first;
    Region merged;
    Region& a = regions[i];
    Region& b = regions[j];
    merged.size = a.size + b.size;
    merged.x0 = std::min(a.x0, b.x0);
    merged.y0 = std::min(a.y0, b.y0);
    merged.x1 = std::max(a.x1, b.x1);
    merged.y1 = std::max(a.y1, b.y1);
    merged.hist.resize(bins);
    for (std::size_t k = 0; k < bins; ++k)
      merged.hist[k] = (a.hist[k] * a.size + b.hist[k] * b.size) / merged.size;
    merged.neighbors = a.neighbors;
    merged.neighbors.insert(b.neighbors.begin(), b.neighbors.end());
    merged.neighbors.erase(i);
    merged.neighbors.erase(j);
    a.alive = b.alive = false;

    for (auto it = sims.begin(); it != sims.end();) {
      const auto [p, q] = it->first;
      it = (p == i || p == j || q == i || q == j) ? sims.erase(it) : std::next(it);
    }
    const std::size_t t = regions.size();
    for (std::size_t n : merged.neighbors) {
      regions[n].neighbors.erase(i);
      regions[n].neighbors.erase(j);
      regions[n].neighbors.insert(t);
    }
    boxes.push_back(box_of(merged));
    regions.push_back(std::move(merged));
    for (std::size_t n : regions[t].neighbors) sims[{n, t}] = similarity(regions[n], regions[t], area);
  }

  std::vector<RoIBox> unique;
  std::set<std::tuple<double, double, double, double>> seen;
  for (RoIBox b : boxes) {
    b.w = std::min(b.w, static_cast<double>(w) - b.x);
    b.h = std::min(b.h, static_cast<double>(h) - b.y);
    if (seen.insert({b.x, b.y, b.w, b.h}).second) unique.push_back(b);
  }
  return unique;
}

std::string proposer_fingerprint(const SelectiveSearchParams& params) {
  std::ostringstream os;
  os.precision(17);
  os << "felzenszwalb-8c/k=" << params.segment.k << "/min_size=" << params.segment.min_size
     << "/sigma=" << params.segment.sigma << ";grouping-gray/bins=" << params.histogram_bins
     << "/terms=hist+size+fill;v1";
  return sha256_hex(os.str()).substr(0, 16);
}

}  // namespace padmae::preprocess
