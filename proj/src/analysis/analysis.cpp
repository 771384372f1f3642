// SPDX-License-Identifier: Apache-2.0
#include "padmae/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "padmae/adapter/adapter.hpp"
#include "padmae/autodiff/init.hpp"
#include "padmae/autodiff/ops.hpp"
#include "padmae/preprocess/image_io.hpp"

namespace padmae::analysis {

namespace fs = std::filesystem;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

double frobenius(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

Tensor difference(const Tensor& a, const Tensor& b) {
  Tensor d(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) d[i] = a[i] - b[i];
  return d;
}

struct ToyBlock {
  ad::ParamStore store;
  adapter::MlpParams mlp;
  adapter::AdapterParams ada;
  adapter::AdapterConfig cfg;
};

void build_toy(ToyBlock& b, const ToyAdapterSpec& spec, double k) {
  Rng rng(derive_seed(spec.seed, "toy-init"));
  b.cfg.middle_dim = spec.middle_dim;
  b.cfg.scale_mode = adapter::ScaleMode::layerwise_frozen;
  b.cfg.layerwise_values = {k};
  b.mlp = adapter::add_mlp_params(b.store, "mlp.", spec.dim, 4 * spec.dim, rng);
  b.ada = adapter::init_adapter(b.store, "adapter.", spec.dim, b.cfg, 0, 1, rng);
  for (ad::Param* p : b.store.all()) p->trainable = p->name.starts_with("adapter.") && p != b.ada.scale;
}

}  // namespace

ScaleDynamicsReport scale_dynamics_experiment(const std::vector<double>& k_values,
                                              const ToyAdapterSpec& spec,
                                              train::OptimizerKind optimizer) {
  if (optimizer != train::OptimizerKind::sgd) {
    throw std::invalid_argument("scale dynamics: the update analysis assumes plain SGD, got " +
                                train::to_string(optimizer));
  }
  if (k_values.empty()) throw std::invalid_argument("scale dynamics: no scale values given");
  for (double k : k_values) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("scale dynamics: scales must be positive");
  }
  Rng data_rng(derive_seed(spec.seed, "toy-data"));
  const Tensor x = ad::normal({spec.tokens, spec.dim}, 1.0, data_rng);
  const Tensor target = ad::normal({spec.tokens, spec.dim}, 1.0, data_rng);

  auto loss_of = [&](ad::Tape& tape, ToyBlock& b) {
    Var out = adapter::patch_adapt_mlp_forward(tape, tape.constant(x), b.mlp, &b.ada, b.cfg).out;
    Var diff = ad::sub(out, tape.constant(target));
    return ad::mean_all(ad::mul(diff, diff));
  };
  auto scaled_adapter = [&](ToyBlock& b, double k) {
    ad::Tape tape;
    Tensor y = adapter::vanilla_adapter_forward(tape, tape.constant(x), b.ada).value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= k;
    return y;
  };

  ScaleDynamicsReport report;
  report.spec = spec;
  auto measure = [&](double k) {
    ScaleDynamicsRow row;
    row.k = k;
    ToyBlock b;
    build_toy(b, spec, k);
    const Tensor w_before = b.ada.up_w->value;
    const Tensor y_before = scaled_adapter(b, k);
    for (std::size_t step = 0; step <= spec.loss_steps; ++step) {
      b.store.zero_grad();
      ad::Tape tape;
      Var loss = loss_of(tape, b);
      row.loss_curve.push_back(loss.value().item());
      tape.backward(loss);
      for (ad::Param* p : b.store.all())
        if (p->trainable) train::sgd_step(*p, spec.lr);
      if (step == 0) {
        row.dw_norm = frobenius(difference(b.ada.up_w->value, w_before));
        row.dy_norm = frobenius(difference(scaled_adapter(b, k), y_before));
      }
    }
    return row;
  };
  const ScaleDynamicsRow unit = measure(1.0);
  for (double k : k_values) {
    ScaleDynamicsRow row = k == 1.0 ? unit : measure(k);
    row.dw_ratio = row.dw_norm / unit.dw_norm;
    row.dy_ratio = row.dy_norm / unit.dy_norm;
    if (!std::isfinite(row.dw_ratio) || !std::isfinite(row.dy_ratio) || row.dw_ratio <= 0.0 ||
        row.dy_ratio <= 0.0) {
      throw std::runtime_error("scale dynamics: degenerate update norms");
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

json scale_dynamics_json(const ScaleDynamicsReport& r) {
  json rows = json::array();
  for (const ScaleDynamicsRow& row : r.rows) {
    rows.push_back({{"k", row.k},
                    {"dw_up_norm", row.dw_norm},
                    {"dy_norm", row.dy_norm},
                    {"dw_up_ratio", row.dw_ratio},
                    {"dy_ratio", row.dy_ratio},
                    {"expected_dw_up_ratio", row.k},
                    {"expected_dy_ratio", row.k * row.k},
                    {"loss_curve", row.loss_curve}});
  }
  return {{"optimizer", "sgd"},
          {"toy", {{"dim", r.spec.dim},
                   {"middle_dim", r.spec.middle_dim},
                   {"tokens", r.spec.tokens},
                   {"lr", r.spec.lr},
                   {"loss_steps", r.spec.loss_steps},
                   {"seed", r.spec.seed}}},
          {"rows", rows}};
}

// ------------------------------------------------------------------ scale maps

double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

namespace {

std::vector<double> min_max(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  }
  return out;
}

void require_patchwise(const vit::ViTConfig& c) {
  if (!c.adapter.enabled || c.adapter.scale_mode != adapter::ScaleMode::patchwise) {
    throw std::invalid_argument(
        "no patchwise scales: model uses " +
        (c.adapter.enabled ? adapter::to_string(c.adapter.scale_mode) : std::string("no adapters")));
  }
}

std::vector<Tensor> capture_scales(vit::MaskedAutoencoder& model, const Image& image) {
  ad::Tape tape;
  vit::EncoderOptions opts;
  opts.capture_scales = true;
  return model.encode(tape, image, opts).scales;
}

void write_gray_png(const fs::path& path, const std::vector<double>& values, std::size_t rows,
                    std::size_t cols, std::size_t upscale) {
  Image img(cols * upscale, rows * upscale, 1);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) img.at(y, x, 0) = values[(y / upscale) * cols + x / upscale];
  preprocess::save_png(path, img);
}

json rounded(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(round9(x));
  return a;
}

}  // namespace

std::vector<ScaleMap> compute_scale_maps(vit::MaskedAutoencoder& model,
                                         const std::vector<Image>& images,
                                         const std::vector<std::size_t>& layers) {
  const vit::ViTConfig& c = model.config();
  require_patchwise(c);
  for (std::size_t l : layers) {
    if (l >= c.depth) throw std::out_of_range("scale maps: layer " + std::to_string(l) + " out of range");
  }
  std::vector<ScaleMap> out;
  const std::size_t offset = c.use_cls_token ? 1 : 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::vector<Tensor> scales = capture_scales(model, images[i]);
    for (std::size_t l : layers) {
      ScaleMap m;
      m.image_index = i;
      m.layer = l;
      m.rows = m.cols = c.grid();
      for (std::size_t p = 0; p < c.num_patches(); ++p) m.raw.push_back(scales[l][p + offset]);
      m.normalized = min_max(m.raw);
      out.push_back(std::move(m));
    }
  }
  return out;
}

void write_scale_maps(const fs::path& dir, const std::vector<ScaleMap>& maps, std::size_t upscale) {
  fs::create_directories(dir);
  json arr = json::array();
  for (const ScaleMap& m : maps) {
    char name[64];
    std::snprintf(name, sizeof name, "scale_img%03zu_layer%02zu.png", m.image_index, m.layer);
    write_gray_png(dir / name, m.normalized, m.rows, m.cols, upscale);
    arr.push_back({{"image", m.image_index},
                   {"layer", m.layer},
                   {"rows", m.rows},
                   {"cols", m.cols},
                   {"png", name},
                   {"raw", rounded(m.raw)},
                   {"normalized", rounded(m.normalized)}});
  }
  std::ofstream(dir / "scale_maps.json") << json{{"maps", arr}}.dump(1) << "\n";
}

std::vector<ScaleMap> read_scale_maps(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot read " + json_path.string());
  const json j = json::parse(in);
  std::vector<ScaleMap> out;
  for (const json& m : j.at("maps")) {
    ScaleMap s;
    s.image_index = m.at("image");
    s.layer = m.at("layer");
    s.rows = m.at("rows");
    s.cols = m.at("cols");
    s.raw = m.at("raw").get<std::vector<double>>();
    s.normalized = m.at("normalized").get<std::vector<double>>();
    out.push_back(std::move(s));
  }
  return out;
}

// ------------------------------------------------------------------ histograms

std::vector<LayerHistogram> scale_histograms(vit::MaskedAutoencoder& model,
                                             const std::vector<Image>& images, std::size_t bins) {
  require_patchwise(model.config());
  if (images.empty()) throw std::invalid_argument("scale histograms: empty image set");
  if (bins == 0) throw std::invalid_argument("scale histograms: bins must be positive");
  const vit::ViTConfig& c = model.config();
  const std::size_t offset = c.use_cls_token ? 1 : 0;
  std::vector<LayerHistogram> hist(c.depth);
  std::vector<double> sum(c.depth, 0.0), sq(c.depth, 0.0);
  for (std::size_t l = 0; l < c.depth; ++l) {
    hist[l].layer = l;
    hist[l].counts.assign(bins, 0);
  }
  for (const Image& img : images) {
    const std::vector<Tensor> scales = capture_scales(model, img);
    for (std::size_t l = 0; l < c.depth; ++l)
      for (std::size_t p = 0; p < c.num_patches(); ++p) {
        const double v = scales[l][p + offset];
        const auto b = std::min(bins - 1, static_cast<std::size_t>(std::max(v, 0.0) * static_cast<double>(bins)));
        ++hist[l].counts[b];
        ++hist[l].total;
        sum[l] += v;
        sq[l] += v * v;
      }
  }
  for (std::size_t l = 0; l < c.depth; ++l) {
    const double n = static_cast<double>(hist[l].total);
    hist[l].mean = sum[l] / n;
    hist[l].stddev = std::sqrt(std::max(sq[l] / n - hist[l].mean * hist[l].mean, 0.0));
  }
  return hist;
}

json histograms_json(const std::vector<std::pair<std::string, std::vector<LayerHistogram>>>& sets) {
  json out = json::object();
  for (const auto& [label, layers] : sets) {
    json arr = json::array();
    double lo = 1.0, hi = 0.0;
    for (const LayerHistogram& h : layers) {
      arr.push_back({{"layer", h.layer},
                     {"counts", h.counts},
                     {"total", h.total},
                     {"mean", h.mean},
                     {"stddev", h.stddev}});
      lo = std::min(lo, h.mean);
      hi = std::max(hi, h.mean);
    }
    out[label] = {{"layers", arr}, {"max_pairwise_mean_gap", layers.empty() ? 0.0 : hi - lo}};
  }
  return out;
}

// ------------------------------------------------------------- attention maps

std::vector<AttentionMap> compute_attention_maps(vit::MaskedAutoencoder& model,
                                                 const std::vector<Image>& images, int layer,
                                                 std::optional<double> scale_override) {
  const int depth = static_cast<int>(model.config().depth);
  const int l = layer < 0 ? depth + layer : layer;
  if (l < 0 || l >= depth) throw std::out_of_range("attention maps: layer " + std::to_string(layer) + " out of range");
  std::vector<AttentionMap> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ad::Tape tape;
    vit::EncoderOptions opts;
    opts.capture_attention = true;
    opts.scale_override = scale_override;
    const vit::EncoderOutput enc = model.encode(tape, images[i], opts);
    out.push_back({i, static_cast<std::size_t>(l), vit::extract_attention_map(*enc.attention, static_cast<std::size_t>(l))});
  }
  return out;
}

void write_attention_maps(const fs::path& dir, const std::vector<AttentionMap>& maps,
                          const std::vector<Image>* overlay_images, std::size_t upscale) {
  fs::create_directories(dir);
  json arr = json::array();
  for (const AttentionMap& m : maps) {
    const std::size_t g = m.map.rows();
    std::vector<double> values(m.map.numel());
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = m.map[k];
    char name[64];
    std::snprintf(name, sizeof name, "attn_img%03zu_layer%02zu.png", m.image_index, m.layer);
    write_gray_png(dir / name, values, g, g, upscale);
    json entry = {{"image", m.image_index}, {"layer", m.layer}, {"grid", g}, {"png", name}, {"map", rounded(values)}};
    if (overlay_images && m.image_index < overlay_images->size()) {
      const Image& src = (*overlay_images)[m.image_index];
      Image over(src.width, src.height, 3);
      for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x) {
          const double a = values[(y * g / src.height) * g + x * g / src.width];
          double gray = 0.0;
          for (std::size_t c = 0; c < src.channels; ++c) gray += src.at(y, x, c);
          gray /= static_cast<double>(src.channels);
          over.at(y, x, 0) = 0.5 * gray + 0.5 * a;
          over.at(y, x, 1) = 0.5 * gray;
          over.at(y, x, 2) = 0.5 * gray + 0.5 * (1.0 - a);
        }
      std::snprintf(name, sizeof name, "overlay_img%03zu_layer%02zu.png", m.image_index, m.layer);
      preprocess::save_png(dir / name, over);
      entry["overlay"] = name;
    }
    arr.push_back(entry);
  }
  std::ofstream(dir / "attention_maps.json") << json{{"maps", arr}}.dump(1) << "\n";
}

// ---------------------------------------------------------------- loss curves

std::vector<double> centered_moving_average(const std::vector<double>& s, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving average: window must be >= 1");
  if (window > s.size()) {
    throw std::invalid_argument("moving average: window " + std::to_string(window) +
                                " exceeds series length " + std::to_string(s.size()));
  }
  const std::size_t back = window / 2, fwd = window - 1 - back;
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t lo = i >= back ? i - back : 0;
    const std::size_t hi = std::min(s.size() - 1, i + fwd);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) sum += s[j];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

LossCurve make_loss_curve(const std::string& label, const std::vector<std::size_t>& epochs,
                          const std::vector<double>& losses, std::size_t window) {
  if (epochs.size() != losses.size()) throw std::invalid_argument("loss curve: epochs and losses differ in length");
  return {label, epochs, losses, centered_moving_average(losses, window)};
}

json loss_curves_json(const std::vector<LossCurve>& curves) {
  json arr = json::array();
  for (const LossCurve& c : curves) {
    arr.push_back({{"label", c.label}, {"epochs", c.epochs}, {"raw", c.raw}, {"smoothed", c.smoothed}});
  }
  return {{"curves", arr}};
}

std::optional<std::size_t> epochs_to_threshold(const LossCurve& curve, double threshold) {
  for (std::size_t i = 0; i < curve.smoothed.size(); ++i) {
    if (curve.smoothed[i] <= threshold) return curve.epochs[i] + 1;
  }
  return std::nullopt;
}

// ------------------------------------------------------------- param counting

std::string millions(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
  return buf;
}

ParamCountReport report_param_counts(const vit::ViTConfig& config) {
  const vit::EncoderParamCount e = vit::count_encoder_params(config);
  ParamCountReport r;
  r.total_encoder = e.total();
  r.backbone = e.backbone();
  r.adapters = e.adapters;
  r.decoder = vit::count_decoder_params(config);
  r.pad_trainable_encoder =
      config.adapter.enabled ? adapter::count_adapter_params(config.adapter, config.embed_dim, config.depth) : 0;
  r.breakdown = {{"patch_embed", e.patch_embed}, {"cls_token", e.cls_token}, {"pos_embed (fixed)", e.pos_embed},
                 {"blocks", e.blocks},           {"final_norm", e.final_norm}, {"adapters", e.adapters},
                 {"decoder", r.decoder}};
  return r;
}

std::string format_param_counts(const ParamCountReport& r) {
  std::ostringstream os;
  char buf[160];
  for (const auto& [name, n] : r.breakdown) {
    std::snprintf(buf, sizeof buf, "  %-20s %12llu\n", name.c_str(), static_cast<unsigned long long>(n));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "adapter-free encoder params: %llu (%s)\n",
                static_cast<unsigned long long>(r.backbone), millions(r.backbone).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "total encoder params: %llu (%s)\n",
                static_cast<unsigned long long>(r.total_encoder), millions(r.total_encoder).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "PAD-trainable encoder params: %llu (%s)\n",
                static_cast<unsigned long long>(r.pad_trainable_encoder),
                millions(r.pad_trainable_encoder).c_str());
  os << buf;
  return os.str();
}

}  // namespace padmae::analysis
