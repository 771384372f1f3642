// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "padmae/adapter/adapter.hpp"
#include "padmae/analysis/analysis.hpp"
#include "padmae/autodiff/gradcheck.hpp"
#include "padmae/mae/pretrain.hpp"
#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/segment.hpp"
#include "padmae/preprocess/synthetic.hpp"
#include "padmae/train/paradigms.hpp"
#include "padmae/train/pretraining.hpp"
#include "roi_reference.hpp"
#include "run_config.hpp"

using namespace padmae;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

cli::RunConfig desk() {
  cli::RunConfig c = cli::default_config("desk");
  c.threads = 1;
  return c;
}

Image random_image(std::size_t size, Rng& rng) {
  Image img(size, size, 3);
  for (double& v : img.data) v = rng.uniform(-2.0, 2.0);
  return img;
}

// ------------------------------------------------------------------ 1
Outcome param_counts() {
  CLI::App app{"padmae"};
  cli::CliOptions o;
  cli::build_app(app, o);
  app.parse("analyze param-count --profile paper --middle-dims 1,8,32", false);
  std::ostringstream out;
  cli::run_command(app, o, out);
  const std::string text = out.str();

  auto grab = [&](const std::string& pattern) -> std::string {
    std::smatch m;
    return std::regex_search(text, m, std::regex(pattern)) ? m[1].str() : "?";
  };
  const std::map<std::string, std::string> want{{"r=1", "0.06"}, {"r=8", "0.20"}, {"r=32", "0.63"},
                                                {"vanilla", "1.21"}, {"patchwise r=64", "1.23"}};
  const std::map<std::string, std::string> got{
      {"r=1", grab(R"(middle_dim 1: PAD-trainable encoder params \d+ \(([\d.]+)M\))")},
      {"r=8", grab(R"(middle_dim 8: PAD-trainable encoder params \d+ \(([\d.]+)M\))")},
      {"r=32", grab(R"(middle_dim 32: PAD-trainable encoder params \d+ \(([\d.]+)M\))")},
      {"vanilla", grab(R"(vanilla adapter \(fixed layerwise scale\): \d+ \(([\d.]+)M\))")},
      {"patchwise r=64", grab(R"(PAD-trainable encoder params: \d+ \(([\d.]+)M\))")}};
  bool pass = true;
  std::string detail;
  for (const auto& [k, v] : want) {
    const bool ok = got.at(k) == v;
    pass = pass && ok;
    detail += k + " " + got.at(k) + (ok ? "" : " (want " + v + ")") + "; ";
  }
  const double total = std::stod(grab(R"(adapter-free encoder params: \d+ \(([\d.]+)M\))"));
  const bool total_ok = std::fabs(total / 85.80 - 1.0) <= 0.005;
  pass = pass && total_ok;
  detail += "adapter-free encoder " + f("%.2f", total) + "M";
  return {pass, detail};
}

// ------------------------------------------------------------------ 2
Outcome scale_dynamics() {
  const std::vector<double> ks{0.25, 0.5, 1.0, 2.0, 4.0};
  const auto rep = analysis::scale_dynamics_experiment(ks, {});
  double worst = 0.0;
  for (const auto& r : rep.rows) {
    worst = std::max(worst, std::fabs(r.dw_ratio / r.k - 1.0));
    worst = std::max(worst, std::fabs(r.dy_ratio / (r.k * r.k) - 1.0));
  }
  return {worst <= 1e-6, "max relative deviation from (k, k^2): " + f("%.2e", worst)};
}

// ------------------------------------------------------------------ 3
Outcome init_identity() {
  vit::ViTConfig with = desk().model;
  vit::ViTConfig without = with;
  without.adapter.enabled = false;
  vit::MaskedAutoencoder a(with, 31), b(without, 31);
  Rng rng(32);
  double worst = 0.0;
  bool half = true;
  for (int i = 0; i < 100; ++i) {
    const Image img = random_image(with.image_size, rng);
    ad::Tape tape;
    vit::EncoderOptions opts;
    opts.capture_scales = true;
    auto ya = a.encode(tape, img, opts);
    auto yb = b.encode(tape, img);
    worst = std::max(worst, ad::max_abs_difference(ya.tokens.value(), yb.tokens.value()));
    for (const ad::Tensor& s : ya.scales)
      for (double v : s.storage()) half = half && v == 0.5;
  }
  return {worst <= 1e-6 && half,
          "max |diff| " + f("%.2e", worst) + (half ? ", s = 0.5 everywhere" : ", s != 0.5 somewhere")};
}

// ------------------------------------------------------------------ 4
Outcome gradients() {
  ad::ParamStore store;
  Rng rng(41);
  adapter::AdapterConfig cfg;
  cfg.middle_dim = 3;
  const auto mlp = adapter::add_mlp_params(store, "mlp.", 6, 24, rng);
  const auto adp = adapter::init_adapter(store, "adapter.", 6, cfg, 0, 1, rng);
  for (ad::Param* p : store.all())
    for (double& v : p->value.storage()) v = rng.uniform(-0.8, 0.8);
  ad::Tensor x({8, 6}), w({8, 6});
  for (double& v : x.storage()) v = rng.uniform(-1, 1);
  for (double& v : w.storage()) v = rng.uniform(-1, 1);
  std::vector<ad::Param*> ps = store.all();
  const auto block = ad::finite_difference_check(ps, [&](ad::Tape& t) {
    ad::Var in = t.constant(x);
    auto o = adapter::patch_adapt_mlp_forward(t, in, mlp, &adp, cfg);
    return ad::sum_all(ad::mul(ad::add(in, o.out), t.constant(w)));
  });

  vit::ViTConfig tiny;
  tiny.image_size = 8;
  tiny.patch_size = 4;
  tiny.embed_dim = 8;
  tiny.depth = 2;
  tiny.num_heads = 2;
  tiny.mlp_ratio = 2;
  tiny.decoder_dim = 8;
  tiny.decoder_depth = 1;
  tiny.decoder_heads = 2;
  tiny.adapter.middle_dim = 2;
  vit::MaskedAutoencoder model(tiny, 42);
  for (ad::Param* p : model.params().all())
    for (double& v : p->value.storage()) v += rng.uniform(-0.2, 0.2);
  Image img(8, 8, 3);
  for (double& v : img.data) v = rng.uniform(0, 1);
  const mae::MaskSpec m = mae::random_masking(4, 0.5, rng);
  const ad::Tensor targets = mae::normalize_patch_targets(img, 4);
  std::vector<ad::Param*> mp = model.params().all();
  const auto full = ad::finite_difference_check(mp, [&](ad::Tape& t) {
    vit::EncoderOptions o;
    o.mask = &m;
    auto enc = model.encode(t, img, o);
    return mae::mae_loss(model.decode(t, enc, m), targets, m);
  });
  return {block.max_rel_error < 1e-4 && full.max_rel_error < 1e-4,
          "PatchAdaptMLP " + f("%.2e", block.max_rel_error) + " over " + std::to_string(block.checked) +
              " scalars, MAE loss " + f("%.2e", full.max_rel_error) + " over " + std::to_string(full.checked)};
}

// ------------------------------------------------------------------ 5
Outcome masking() {
  Rng rng(51);
  bool counts = true;
  for (std::size_t n : {4u, 16u, 49u, 64u, 196u, 197u}) {
    counts = counts && mae::random_masking(n, 0.75, rng).num_visible == n / 4;
  }
  ad::Tensor targets({16, 12}), pred({16, 12});
  for (double& v : targets.storage()) v = rng.uniform(-1, 1);
  for (double& v : pred.storage()) v = rng.uniform(-1, 1);
  bool invariant = true;
  for (int t = 0; t < 100; ++t) {
    const mae::MaskSpec m = mae::random_masking(16, 0.75, rng);
    ad::Tape t1;
    const double base = mae::mae_loss(t1.constant(pred), targets, m).value().item();
    ad::Tensor moved = pred;
    for (std::size_t v : m.visible_indices())
      for (std::size_t c = 0; c < 12; ++c) moved.at(v, c) += rng.uniform(-10, 10);
    ad::Tape t2;
    invariant = invariant && mae::mae_loss(t2.constant(moved), targets, m).value().item() == base;
  }
  std::size_t masked = 0, total = 0;
  for (int t = 0; t < 10000; ++t) {
    const mae::MaskSpec m = mae::random_masking(196, 0.75, rng);
    masked += m.num_masked();
    total += m.num_patches();
  }
  const double frac = static_cast<double>(masked) / total;
  const bool frac_ok = std::fabs(frac - 0.75) <= 0.005;
  return {counts && invariant && frac_ok, std::string("visible counts ") + (counts ? "ok" : "wrong") +
                                              ", visible perturbation " + (invariant ? "bit-invariant" : "changes loss") +
                                              ", masked fraction " + f("%.4f", frac)};
}

// ------------------------------------------------------------------ 6
Outcome roi_crop() {
  const preprocess::CropConfig cfg;  // l_min 60
  Rng setup(61);
  std::size_t mismatches = 0, large = 0, bad_box = 0, roi_path = 0;
  const std::size_t n = 100000;
  for (std::size_t t = 0; t < n; ++t) {
    const double W = std::floor(setup.uniform(64.0, 400.0));
    const double H = std::floor(setup.uniform(64.0, 400.0));
    const auto rois = testing::random_rois(setup, W, H, 1 + setup.uniform_index(12));
    Rng a(derive_seed(62, "crop", t)), b(derive_seed(62, "crop", t));
    const auto got = preprocess::random_roi_crop(static_cast<std::size_t>(W), static_cast<std::size_t>(H), rois, cfg, a);
    const auto want = testing::reference_crop(W, H, rois, cfg, b);
    if (!(got.box == want.box) || got.fallback != want.fallback || got.large_roi != want.large ||
        a.next_u64() != b.next_u64()) {
      ++mismatches;
    }
    large += got.large_roi;
    if (!got.fallback) {
      ++roi_path;
      if (!got.box.inside(W, H) || got.box.w < 60.0 || got.box.h < 60.0) ++bad_box;
    }
  }
  std::size_t empty_ok = 0;
  Rng er(63);
  for (int i = 0; i < 1000; ++i) empty_ok += preprocess::random_roi_crop(320, 240, {}, cfg, er).fallback;
  const double freq = static_cast<double>(large) / n;
  const bool pass = mismatches == 0 && std::fabs(freq - 0.15) <= 0.01 && bad_box == 0 && empty_ok == 1000;
  return {pass, std::to_string(mismatches) + " mismatches in 1e5 replays, LargeRoI " + f("%.4f", freq) + ", " +
                    std::to_string(bad_box) + " bad boxes of " + std::to_string(roi_path) +
                    " RoI-path crops, empty cache fell back " + std::to_string(empty_ok) + "/1000"};
}

// Stage-A weights per seed, shared by criteria 7 and 8.
std::map<std::uint64_t, train::Checkpoint> g_stage_a;

const train::Checkpoint& stage_a(std::uint64_t seed) {
  auto it = g_stage_a.find(seed);
  if (it != g_stage_a.end()) return it->second;
  cli::RunConfig c = desk();
  c.seed = seed;
  return g_stage_a.emplace(seed, train::obtain_stage_a(c.model, c.stage_a_spec(), c.proposer)).first->second;
}

// ------------------------------------------------------------------ 7
Outcome freeze_schedule() {
  const cli::RunConfig c = desk();
  const train::PretrainConfig pc = c.pretrain_config();
  const auto data = train::synthetic_dataset(c.target_corpus(), c.proposer, 1);
  auto model = train::build_stage_b_model(train::Paradigm::pad, c.model, &stage_a(c.seed), derive_seed(c.seed, "init", 1));
  auto is_ps = [](const ad::Param& p) { return p.name.find("ps.weight") != std::string::npos; };
  const std::string b0 = train::backbone_digest(model->params());
  const std::string ps0 = train::params_digest(model->params(), is_ps);
  const std::size_t unfreeze = train::ps_unfreeze_epoch(pc.ps_unfreeze_fraction, pc.epochs);
  std::size_t backbone_changes = 0, early_ps_changes = 0, late_ps_same = 0, epochs = 0;
  train::PretrainHooks hooks;
  hooks.on_epoch = [&](const train::EpochRecord& r, const vit::MaskedAutoencoder& m) {
    auto& store = const_cast<vit::MaskedAutoencoder&>(m).params();
    ++epochs;
    backbone_changes += train::backbone_digest(store) != b0;
    const bool ps_same = train::params_digest(store, is_ps) == ps0;
    if (r.epoch < unfreeze) early_ps_changes += !ps_same;
    else late_ps_same += ps_same;
  };
  train::run_pretraining(*model, train::Paradigm::pad, data, pc, hooks);
  const bool pass = epochs == 10 && backbone_changes == 0 && early_ps_changes == 0 && late_ps_same == 0;
  return {pass, std::to_string(epochs) + " epochs, unfreeze at epoch " + std::to_string(unfreeze) +
                    ", backbone changed in " + std::to_string(backbone_changes) + ", PS changed early in " +
                    std::to_string(early_ps_changes) + ", PS still frozen late in " + std::to_string(late_ps_same)};
}

// ------------------------------------------------------------------ 8
// Fixed-scale PAD runs. Epoch losses are smoothed with a centered window of
// 5; a run reaches its threshold at the first smoothed epoch at or below half
// of its loss before the first update. Runs that never get there count as
// one epoch past the budget.
Outcome training_dynamics() {
  const std::size_t budget = 60;
  std::map<double, std::vector<double>> epochs_to;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    cli::RunConfig c = desk();
    c.seed = seed;
    const auto data = train::synthetic_dataset(c.target_corpus(), c.proposer, 1);
    for (double s : {0.1, 1.0}) {
      vit::ViTConfig mc = c.model;
      mc.adapter.scale_mode = adapter::ScaleMode::layerwise_frozen;
      mc.adapter.schedule.kind = adapter::ScheduleKind::constant;
      mc.adapter.schedule.last_value = s;
      train::PretrainConfig pc = c.pretrain_config();
      pc.epochs = budget;
      pc.schedule.total_epochs = budget;
      auto model = train::build_stage_b_model(train::Paradigm::pad, mc, &stage_a(seed), derive_seed(seed, "init", 1));
      const auto res = train::run_pretraining(*model, train::Paradigm::pad, data, pc);
      std::vector<std::size_t> ep;
      std::vector<double> loss;
      for (const auto& r : res.epochs) {
        ep.push_back(r.epoch);
        loss.push_back(r.smoothed_loss);
      }
      const auto curve = analysis::make_loss_curve("s", ep, loss, 5);
      const auto hit = analysis::epochs_to_threshold(curve, 0.5 * res.initial_loss.value());
      const double e = hit ? static_cast<double>(*hit) : static_cast<double>(budget + 1);
      epochs_to[s].push_back(e);
      detail += "seed " + std::to_string(seed) + " s=" + f("%g", s) + ": " +
                (hit ? std::to_string(*hit) : std::string("never")) + "; ";
    }
  }
  const double m1 = train::median(epochs_to[1.0]), m01 = train::median(epochs_to[0.1]);
  const bool reached = m1 <= static_cast<double>(budget);
  return {reached && m1 <= m01,
          "median epochs to 0.5x initial loss: s=1.0 " + f("%g", m1) + ", s=0.1 " + f("%g", m01) + " (" + detail + ")"};
}

// ------------------------------------------------------------------ 9
Outcome paradigm_suite() {
  const train::SuiteConfig s = desk().suite_config();
  const train::SuiteReport a = train::run_paradigm_suite(s);
  const train::SuiteReport b = train::run_paradigm_suite(s);
  const bool same = train::suite_report_json(a).dump() == train::suite_report_json(b).dump();
  std::set<train::Paradigm> seen;
  double pad = 0.0;
  std::string accs;
  for (const auto& row : a.rows) {
    seen.insert(row.paradigm);
    if (row.paradigm == train::Paradigm::pad) pad = row.median_accuracy;
    accs += train::to_string(row.paradigm) + " " + f("%.3f", row.median_accuracy) + ", ";
  }
  const std::string table = train::suite_report_table(a);
  const bool pass = seen.size() == 4 && !table.empty() && pad > a.chance && same;
  return {pass, "median probe accuracy: " + accs + "chance " + f("%.2f", a.chance) +
                    (same ? "; rerun bit-identical" : "; rerun differs")};
}

// ------------------------------------------------------------------ 10
Outcome selective_search() {
  std::size_t ok = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    Rng rng(derive_seed(101, "two-blob", t));
    const auto s = preprocess::two_blob_image(96, rng);
    const auto boxes = preprocess::selective_search(s.image);
    bool all = true;
    for (const auto& gt : s.objects) {
      double best = 0.0;
      for (const auto& bx : boxes) best = std::max(best, preprocess::iou(bx, gt));
      all = all && best >= 0.5;
    }
    ok += all;
  }
  return {ok >= 95, std::to_string(ok) + "/100 instances with both blobs at IoU >= 0.5"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run just these criteria (1-10)");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "parameter counts", 1, param_counts},
      {2, "scale dynamics", 10, scale_dynamics},
      {3, "initialization identity", 30, init_identity},
      {4, "gradient correctness", 120, gradients},
      {5, "masking and loss invariants", 60, masking},
      {6, "RoI crop conformance", 120, roi_crop},
      {7, "freeze schedule", 600, freeze_schedule},
      {8, "training dynamics", 1200, training_dynamics},
      {9, "paradigm suite", 1800, paradigm_suite},
      {10, "selective search sanity", 120, selective_search},
  };
  bool all_pass = true;
  for (const Criterion& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("%s %2d %s: %s [%.2fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
