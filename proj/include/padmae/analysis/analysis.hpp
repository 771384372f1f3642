// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "padmae/autodiff/tensor.hpp"
#include "padmae/core/image.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/vit/config.hpp"
#include "padmae/vit/model.hpp"

namespace padmae::analysis {

// ------------------------------------------------------------- scale dynamics

/// One PatchAdaptMLP block with a fixed scale s, W_up = 0 at the start, a
/// fixed random input batch and a fixed random regression target.
struct ToyAdapterSpec {
  std::size_t dim = 16;
  std::size_t middle_dim = 8;
  std::size_t tokens = 12;
  double lr = 0.05;
  /// Extra SGD steps whose losses are logged per scale.
  std::size_t loss_steps = 50;
  std::uint64_t seed = 0;
};

struct ScaleDynamicsRow {
  double k = 1.0;
  /// Frobenius norm of the first-step change of W_up.
  double dw_norm = 0.0;
  /// Frobenius norm of the first-step change of y = s * adapter(x).
  double dy_norm = 0.0;
  double dw_ratio = 1.0;  ///< relative to s = 1
  double dy_ratio = 1.0;
  /// Loss before the first step, then after each step.
  std::vector<double> loss_curve;
};

struct ScaleDynamicsReport {
  ToyAdapterSpec spec;
  std::vector<ScaleDynamicsRow> rows;
};

/// Plain SGD only; any other optimizer kind is rejected.
ScaleDynamicsReport scale_dynamics_experiment(const std::vector<double>& k_values,
                                              const ToyAdapterSpec& spec,
                                              train::OptimizerKind optimizer = train::OptimizerKind::sgd);

nlohmann::json scale_dynamics_json(const ScaleDynamicsReport& report);

// ------------------------------------------------------------------ scale maps

struct ScaleMap {
  std::size_t image_index = 0;
  std::size_t layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> raw;         ///< s per patch, raster order, cls dropped
  std::vector<double> normalized;  ///< per-map min-max, constant map -> zeros
};

/// Unmasked forward of each image capturing s in every requested layer.
/// Raises when the model has no patchwise scales.
std::vector<ScaleMap> compute_scale_maps(vit::MaskedAutoencoder& model,
                                         const std::vector<Image>& images,
                                         const std::vector<std::size_t>& layers);

/// PNG per map (normalized, nearest-neighbour upscaled by `upscale`) and
/// scale_maps.json with raw and normalized values at 9 significant digits.
void write_scale_maps(const std::filesystem::path& dir, const std::vector<ScaleMap>& maps,
                      std::size_t upscale = 8);
std::vector<ScaleMap> read_scale_maps(const std::filesystem::path& json_path);

/// Rounds to 9 significant digits, the precision of the numeric sidecars.
double round9(double v);

// ------------------------------------------------------------------ histograms

struct LayerHistogram {
  std::size_t layer = 0;
  std::vector<std::size_t> counts;  ///< equal-width bins over [0, 1]
  std::size_t total = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

std::vector<LayerHistogram> scale_histograms(vit::MaskedAutoencoder& model,
                                             const std::vector<Image>& images,
                                             std::size_t bins = 50);

/// Overlay of several labelled histogram sets (e.g. pre-trained vs fine-tuned).
nlohmann::json histograms_json(
    const std::vector<std::pair<std::string, std::vector<LayerHistogram>>>& sets);

// ------------------------------------------------------------- attention maps

struct AttentionMap {
  std::size_t image_index = 0;
  std::size_t layer = 0;
  ad::Tensor map;  ///< grid x grid, min-max normalized
};

/// layer < 0 counts from the end (-1 = last block). `scale_override` swaps
/// the adapter scale at inference.
std::vector<AttentionMap> compute_attention_maps(vit::MaskedAutoencoder& model,
                                                 const std::vector<Image>& images, int layer = -1,
                                                 std::optional<double> scale_override = std::nullopt);

/// Heatmap PNGs, optional overlays on the (un-normalized) source images, and
/// attention_maps.json.
void write_attention_maps(const std::filesystem::path& dir, const std::vector<AttentionMap>& maps,
                          const std::vector<Image>* overlay_images = nullptr,
                          std::size_t upscale = 8);

// ---------------------------------------------------------------- loss curves

/// Centered moving average. Near the edges the window is truncated to the
/// points that exist. Even windows reach one point further back than forward.
std::vector<double> centered_moving_average(const std::vector<double>& series, std::size_t window);

struct LossCurve {
  std::string label;
  std::vector<std::size_t> epochs;
  std::vector<double> raw;
  std::vector<double> smoothed;
};

LossCurve make_loss_curve(const std::string& label, const std::vector<std::size_t>& epochs,
                          const std::vector<double>& losses, std::size_t window = 5);
nlohmann::json loss_curves_json(const std::vector<LossCurve>& curves);

/// First epoch whose smoothed loss is at or below `threshold`, if any.
std::optional<std::size_t> epochs_to_threshold(const LossCurve& curve, double threshold);

// ------------------------------------------------------------- param counting

struct ParamCountReport {
  std::uint64_t total_encoder = 0;
  std::uint64_t backbone = 0;
  std::uint64_t adapters = 0;
  /// Encoder params updated under PAD (adapter branch, PS weight, learnable scales).
  std::uint64_t pad_trainable_encoder = 0;
  std::uint64_t decoder = 0;
  std::vector<std::pair<std::string, std::uint64_t>> breakdown;
};

ParamCountReport report_param_counts(const vit::ViTConfig& config);
std::string format_param_counts(const ParamCountReport& report);
/// "1.23M" style, two decimals in millions.
std::string millions(std::uint64_t n);

}  // namespace padmae::analysis
