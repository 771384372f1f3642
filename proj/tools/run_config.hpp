// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "padmae/analysis/analysis.hpp"
#include "padmae/train/paradigms.hpp"

namespace padmae::cli {

struct AnalysisSettings {
  preprocess::CorpusKind kind = preprocess::CorpusKind::thermal;
  std::size_t images = 100;
  std::size_t source_size = 32;
  /// Empty: every encoder layer.
  std::vector<std::size_t> layers;
  std::size_t bins = 50;
  std::size_t window = 5;
  std::size_t upscale = 8;
  std::vector<double> k_values{0.25, 0.5, 1.0, 2.0, 4.0};
  analysis::ToyAdapterSpec toy;
};

/// Everything a run needs. Sections: model, adapter, data, crop, optimizer,
/// schedule, paradigm, probe, analysis. Defaults come from the profile.
struct RunConfig {
  std::string profile = "desk";
  vit::ViTConfig model;
  double mask_ratio = 0.75;

  std::optional<std::string> manifest;
  train::CorpusSpec corpus;
  preprocess::SelectiveSearchParams proposer;

  bool roi_crop = true;
  preprocess::CropConfig crop;

  train::OptimizerConfig optimizer;
  train::ScheduleConfig schedule;

  train::Paradigm paradigm = train::Paradigm::pad;
  double ps_unfreeze_fraction = 0.6;
  bool learnable_layer_scale = false;
  std::size_t checkpoint_every = 0;
  std::optional<std::string> stage_a_checkpoint;
  train::CorpusSpec stage_a_corpus;
  std::size_t stage_a_epochs = 20;
  double stage_a_base_lr = 2e-2;
  std::vector<std::uint64_t> suite_seeds{0, 1, 2};

  train::ProbeSpec probe;
  AnalysisSettings analysis;

  std::uint64_t seed = 0;
  /// 0: all cores.
  std::size_t threads = 0;

  /// Stage-B loop settings; seeds derived from `seed`.
  train::PretrainConfig pretrain_config() const;
  train::StageASpec stage_a_spec() const;
  train::SuiteConfig suite_config() const;
  /// Target corpus with its seed derived from `seed`.
  train::CorpusSpec target_corpus() const;
};

RunConfig default_config(std::string_view profile);

/// Parses a JSON config. The profile is `profile_override` when given, else
/// the document's `profile` key, else desk. Unknown keys raise ConfigError
/// naming the key path.
RunConfig parse_run_config(const std::string& text,
                           const std::optional<std::string>& profile_override = std::nullopt);

nlohmann::json to_json(const RunConfig& c);

std::vector<std::string> split_list(const std::string& s);

}  // namespace padmae::cli
