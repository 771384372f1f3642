// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "padmae/train/pretraining.hpp"
#include "padmae/train/probe.hpp"

namespace padmae::train {

/// Synthetic domain-shift benchmark: stage A on textured RGB images, stage B
/// and the probe on thermal-like scenes.
struct SuiteConfig {
  /// Adapter settings apply to the pad row; the three baselines run adapter-free.
  vit::ViTConfig model;
  StageASpec stage_a;
  CorpusSpec target{preprocess::CorpusKind::thermal, 256, 32, 0};
  PretrainConfig stage_b;
  /// Layerwise lr decay for the full_from_init row.
  std::optional<double> full_layer_decay = 0.7;
  ProbeSpec probe;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  preprocess::SelectiveSearchParams proposer;
  std::vector<Paradigm> paradigms{Paradigm::from_scratch, Paradigm::cross_domain,
                                  Paradigm::full_from_init, Paradigm::pad};
};

struct SuiteRow {
  Paradigm paradigm = Paradigm::pad;
  std::vector<double> probe_accuracy;  ///< one per seed
  std::vector<double> final_loss;      ///< last stage-B epoch loss; empty runs give NaN
  double median_accuracy = 0.0;
  std::uint64_t stage_b_steps = 0;
  std::uint64_t trainable_encoder_params = 0;
};

struct SuiteReport {
  std::vector<std::uint64_t> seeds;
  double chance = 0.5;
  std::vector<SuiteRow> rows;
};

SuiteReport run_paradigm_suite(const SuiteConfig& config);

nlohmann::json suite_report_json(const SuiteReport& report);
/// Paradigm x metric text table.
std::string suite_report_table(const SuiteReport& report);

double median(std::vector<double> values);

}  // namespace padmae::train
