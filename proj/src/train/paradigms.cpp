// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/paradigms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace padmae::train {

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SuiteReport run_paradigm_suite(const SuiteConfig& config) {
  if (config.seeds.empty()) throw std::invalid_argument("paradigm suite needs at least one seed");
  SuiteReport report;
  report.seeds = config.seeds;
  for (Paradigm p : config.paradigms) report.rows.push_back({p, {}, {}, 0.0, 0, 0});

  vit::ViTConfig baseline = config.model;
  baseline.adapter.enabled = false;

  for (std::uint64_t seed : config.seeds) {
    StageASpec a = config.stage_a;
    a.train.seed = derive_seed(seed, "stage-a");
    a.corpus.seed = derive_seed(seed, "stage-a-corpus");
    const Checkpoint stage_a = obtain_stage_a(baseline, a, config.proposer);

    CorpusSpec target = config.target;
    target.seed = derive_seed(seed, "target-corpus");
    const preprocess::Dataset data = synthetic_dataset(target, config.proposer, config.stage_b.threads);

    for (SuiteRow& row : report.rows) {
      const vit::ViTConfig& mc = row.paradigm == Paradigm::pad ? config.model : baseline;
      auto model = build_stage_b_model(row.paradigm, mc, &stage_a, derive_seed(seed, "init", 1));
      PretrainConfig b = config.stage_b;
      b.seed = derive_seed(seed, "stage-b");
      b.layer_decay = row.paradigm == Paradigm::full_from_init ? config.full_layer_decay : std::nullopt;
      const PretrainResult r = run_pretraining(*model, row.paradigm, data, b);
      row.stage_b_steps = r.steps;
      row.final_loss.push_back(r.epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : r.epochs.back().smoothed_loss);
      if (row.paradigm != Paradigm::cross_domain) {
        PolicyOptions po;
        po.depth = mc.depth;
        po.total_epochs = b.epochs;
        po.ps_unfreeze_fraction = b.ps_unfreeze_fraction;
        const auto names = make_policy(row.paradigm, model->params(), po)
                               .trainable_names(b.epochs == 0 ? 0 : b.epochs - 1);
        std::uint64_t count = 0;
        for (const ad::Param* p : model->params().all("encoder."))
          if (names.count(p->name)) count += p->value.numel();
        row.trainable_encoder_params = count;
      }
      ProbeSpec ps = config.probe;
      ps.seed = derive_seed(seed, "probe");
      const ProbeReport pr = run_probe(capture_checkpoint(model->params(), mc), ps);
      report.chance = pr.chance;
      row.probe_accuracy.push_back(pr.test_accuracy);
    }
  }
  for (SuiteRow& row : report.rows) row.median_accuracy = median(row.probe_accuracy);
  return report;
}

nlohmann::json suite_report_json(const SuiteReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SuiteRow& r : report.rows) {
    nlohmann::json losses = nlohmann::json::array();
    for (double l : r.final_loss) losses.push_back(std::isfinite(l) ? nlohmann::json(l) : nlohmann::json(nullptr));
    rows.push_back({{"paradigm", to_string(r.paradigm)},
                    {"probe_accuracy", r.probe_accuracy},
                    {"median_accuracy", r.median_accuracy},
                    {"final_pretrain_loss", losses},
                    {"stage_b_steps", r.stage_b_steps},
                    {"trainable_encoder_params", r.trainable_encoder_params}});
  }
  return {{"seeds", report.seeds}, {"chance", report.chance}, {"rows", rows}};
}

std::string suite_report_table(const SuiteReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-28s %8s %14s %12s\n", "paradigm", "probe acc (per seed)",
                "median", "stage-B steps", "trainable");
  os << buf;
  for (const SuiteRow& r : report.rows) {
    std::string accs;
    for (double a : r.probe_accuracy) {
      std::snprintf(buf, sizeof buf, "%s%.4f", accs.empty() ? "" : " ", a);
      accs += buf;
    }
    std::snprintf(buf, sizeof buf, "%-16s %-28s %8.4f %14llu %12llu\n", to_string(r.paradigm).c_str(),
                  accs.c_str(), r.median_accuracy, static_cast<unsigned long long>(r.stage_b_steps),
                  static_cast<unsigned long long>(r.trainable_encoder_params));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "chance %.4f\n", report.chance);
  os << buf;
  return os.str();
}

}  // namespace padmae::train
