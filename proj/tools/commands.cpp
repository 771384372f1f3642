// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "padmae/analysis/analysis.hpp"
#include "padmae/core/rng.hpp"
#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/dataset.hpp"
#include "padmae/preprocess/synthetic.hpp"
#include "padmae/train/checkpoint.hpp"
#include "padmae/train/config_json.hpp"
#include "padmae/train/paradigms.hpp"
#include "padmae/train/pretraining.hpp"
#include "padmae/train/probe.hpp"

namespace padmae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void build_app(CLI::App& app, CliOptions& o) {
  app.description("Masked-autoencoder pre-training with patchwise adapters on small images.");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config_path, "JSON run config (sections: model, adapter, data, crop, optimizer, schedule, paradigm, probe, analysis)")
      ->check(CLI::ExistingFile);
  app.add_option("--profile", o.profile, "Default set: desk (small, CPU) or paper (ViT-B)")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", o.seed, "Root seed for every random stream");
  app.add_option("--threads", o.threads, "Worker threads (default: all cores); results do not depend on it");
  app.add_option("--run-dir", o.run_dir, "Output directory (default: runs/<command>)");

  auto* gen = app.add_subcommand("generate", "Write a synthetic image corpus as PNG files");
  gen->add_option("--out", o.gen_out, "Output directory")->required();
  gen->add_option("--kind", o.gen_kind, "thermal or textured")->check(CLI::IsMember({"thermal", "textured"}));
  gen->add_option("--count", o.gen_count, "Number of images");
  gen->add_option("--size", o.gen_size, "Image side in pixels (default: data.synthetic.size)");

  auto* prep = app.add_subcommand("prepare", "Subsample frames, compute region proposals and dataset stats");
  prep->add_option("--data-dir", o.data_dir, "Directory scanned recursively for images")->required();
  prep->add_option("--out", o.prep_out, "Directory for manifest.json and roi_cache.jsonl")->required();
  prep->add_option("--stride", o.stride, "Keep every n-th frame of each sequence")->check(CLI::PositiveNumber);
  prep->add_option("--on-error", o.on_error, "skip or abort on unreadable images")->check(CLI::IsMember({"skip", "abort"}));

  auto* pre = app.add_subcommand("pretrain", "Run stage-B pre-training for one paradigm");
  pre->add_option("--paradigm", o.paradigm, "from_scratch, cross_domain, full_from_init or pad");
  pre->add_option("--manifest", o.manifest, "Prepared dataset (default: synthetic corpus)");
  pre->add_option("--stage-a", o.stage_a, "Stage-A checkpoint directory (default: train one)");
  pre->add_option("--epochs", o.epochs, "Stage-B epochs");

  auto* probe = app.add_subcommand("probe", "Per-patch segmentation probe of a checkpoint");
  probe->add_option("--checkpoint", o.checkpoints, "Checkpoint directory")->required()->expected(1);

  app.add_subcommand("paradigms", "Run all paradigms over the configured seeds and compare probe accuracy");

  auto* an = app.add_subcommand("analyze", "Analysis tools");
  an->require_subcommand(1);
  an->fallthrough();
  auto* sm = an->add_subcommand("scale-maps", "Per-patch scale maps as PNG and JSON");
  sm->add_option("--checkpoint", o.checkpoints, "Checkpoint directory")->required()->expected(1);
  sm->add_option("--images", o.images, "Number of images");
  sm->add_option("--layers", o.layers, "Comma-separated layer indices (default: all)");
  sm->add_option("--manifest", o.manifest, "Prepared dataset to draw images from");

  auto* hi = an->add_subcommand("histograms", "Per-layer scale histograms, one set per checkpoint");
  hi->add_option("--checkpoint", o.checkpoints, "Checkpoint directory, optionally label=dir; repeatable")->required();
  hi->add_option("--images", o.images, "Number of images");
  hi->add_option("--bins", o.bins, "Bins over [0, 1]");
  hi->add_option("--manifest", o.manifest, "Prepared dataset to draw images from");

  auto* at = an->add_subcommand("attention", "Attention maps of one encoder layer");
  at->add_option("--checkpoint", o.checkpoints, "Checkpoint directory")->required()->expected(1);
  at->add_option("--images", o.images, "Number of images");
  at->add_option("--layer", o.attention_layer, "Layer index; negative counts from the end");
  at->add_option("--scale-override", o.scale_override, "Adapter scale used at inference");
  at->add_flag("--overlay", o.overlay, "Also write heatmaps blended over the images");
  at->add_option("--manifest", o.manifest, "Prepared dataset to draw images from");

  auto* sd = an->add_subcommand("scale-dynamics", "First-step update size of a toy adapter versus the scale");
  sd->add_option("--k", o.k_values, "Comma-separated scale values");

  auto* pc = an->add_subcommand("param-count", "Parameter counts of the configured model");
  pc->add_option("--middle-dims", o.middle_dims, "Comma-separated adapter widths to tabulate");

  auto* lc = an->add_subcommand("loss-curves", "Smoothed loss curves from epochs.log files");
  lc->add_option("--log", o.logs, "epochs.log, optionally label=path; repeatable")->required();
  lc->add_option("--window", o.window, "Moving-average window");
}

RunConfig resolve_config(const CliOptions& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw train::ConfigError("cannot read config " + o.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    c = parse_run_config(ss.str(), o.profile);
  } else {
    c = default_config(o.profile.value_or("desk"));
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (c.threads == 0) c.threads = std::max(1u, std::thread::hardware_concurrency());
  if (o.paradigm) {
    try {
      c.paradigm = train::parse_paradigm(*o.paradigm);
    } catch (const std::exception& e) {
      throw train::ConfigError(std::string("--paradigm: ") + e.what());
    }
  }
  if (o.manifest) c.manifest = *o.manifest;
  if (o.stage_a) c.stage_a_checkpoint = *o.stage_a;
  if (o.epochs) {
    // A shorter run from the command line keeps its warmup inside the run.
    c.schedule.total_epochs = *o.epochs;
    c.schedule.warmup_epochs = std::min(c.schedule.warmup_epochs, *o.epochs);
  }
  if (o.images) c.analysis.images = *o.images;
  if (o.window) c.analysis.window = *o.window;
  if (o.bins) c.analysis.bins = *o.bins;
  if (!o.layers.empty()) {
    c.analysis.layers.clear();
    for (const auto& s : split_list(o.layers)) c.analysis.layers.push_back(std::stoul(s));
  }
  if (!o.k_values.empty()) {
    c.analysis.k_values.clear();
    for (const auto& s : split_list(o.k_values)) c.analysis.k_values.push_back(std::stod(s));
  }
  c.pretrain_config().validate();
  return c;
}

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::pair<std::string, std::string> labelled(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {arg, arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

std::unique_ptr<vit::MaskedAutoencoder> load_model(const std::string& dir) {
  train::Checkpoint ck = train::load_checkpoint(dir);
  auto m = std::make_unique<vit::MaskedAutoencoder>(ck.model, 0);
  train::restore_params(m->params(), ck, train::LoadScope::all);
  return m;
}

struct ImageSet {
  std::vector<Image> raw;
  std::vector<Image> normalized;
};

// Images the analysis tools look at: the first N of a prepared dataset, or a
// fresh synthetic set when no manifest is configured.
ImageSet analysis_images(const RunConfig& c, std::size_t model_size) {
  ImageSet set;
  std::array<double, 3> mean{}, sd{};
  auto fit = [&](Image img) {
    if (img.width != model_size || img.height != model_size) {
      img = preprocess::crop_and_resize(
          img, {0, 0, static_cast<double>(img.width), static_cast<double>(img.height)}, model_size);
    }
    return img;
  };
  if (c.manifest) {
    preprocess::Dataset d = preprocess::load_dataset(*c.manifest, preprocess::ErrorPolicy::skip);
    const std::size_t n = std::min(c.analysis.images, d.size());
    for (std::size_t i = 0; i < n; ++i) set.raw.push_back(fit(d.images[i]));
    mean = d.mean;
    sd = d.std;
  } else {
    const std::uint64_t s = derive_seed(c.seed, "analysis");
    for (std::size_t i = 0; i < c.analysis.images; ++i) {
      set.raw.push_back(fit(preprocess::corpus_image(c.analysis.kind, c.analysis.source_size, s, i)));
    }
    std::array<double, 3> sum{}, sq{};
    std::size_t count = 0;
    for (const Image& img : set.raw) {
      for (std::size_t p = 0; p < img.width * img.height; ++p) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = img.data[p * img.channels + std::min(ch, img.channels - 1)];
          sum[ch] += v;
          sq[ch] += v * v;
        }
      }
      count += img.width * img.height;
    }
    for (std::size_t ch = 0; ch < 3; ++ch) {
      mean[ch] = count ? sum[ch] / count : 0.0;
      sd[ch] = count ? std::sqrt(std::max(sq[ch] / count - mean[ch] * mean[ch], 0.0)) : 1.0;
      sd[ch] = std::max(sd[ch], 1e-6);
    }
  }
  if (set.raw.empty()) throw std::runtime_error("no images to analyze");
  for (const Image& img : set.raw) set.normalized.push_back(preprocess::normalize_image(img, mean, sd));
  return set;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cmd_generate(const CliOptions& o, const RunConfig& c, std::ostream& out) {
  const auto kind = preprocess::parse_corpus_kind(o.gen_kind);
  const auto paths = preprocess::write_corpus(o.gen_out, kind, o.gen_count, o.gen_size.value_or(c.corpus.size),
                                              derive_seed(c.seed, "corpus-files"));
  out << "wrote " << paths.size() << " images to " << o.gen_out << "\n";
  return 0;
}

int cmd_prepare(const CliOptions& o, const RunConfig& c, std::ostream& out) {
  preprocess::PrepareOptions p;
  p.data_dir = o.data_dir;
  p.out_dir = o.prep_out;
  p.stride = o.stride;
  p.threads = c.threads;
  p.proposer = c.proposer;
  p.on_error = o.on_error == "abort" ? preprocess::ErrorPolicy::abort : preprocess::ErrorPolicy::skip;
  preprocess::PrepareStats st;
  const auto m = preprocess::prepare_dataset(p, &st);
  out << "scanned " << st.scanned << ", kept " << m.entries.size() << ", recomputed " << st.recomputed
      << ", reused " << st.reused << ", failed " << st.failed << "\n";
  out << "mean " << m.mean[0] << " " << m.mean[1] << " " << m.mean[2] << "  std " << m.std[0] << " "
      << m.std[1] << " " << m.std[2] << "\n";
  out << "manifest: " << (fs::path(o.prep_out) / "manifest.json").string() << "\n";
  return 0;
}

int cmd_pretrain(const fs::path& run_dir, const RunConfig& c, std::ostream& out) {
  fs::create_directories(run_dir / "exports");
  const std::string echo = to_json(c).dump(2);
  {
    std::ofstream e(run_dir / "config.echo");
    e << echo << "\n";
  }
  preprocess::Dataset data = c.manifest ? preprocess::load_dataset(*c.manifest)
                                        : train::synthetic_dataset(c.target_corpus(), c.proposer, c.threads);
  out << "dataset: " << data.size() << " images\n";

  std::optional<train::Checkpoint> stage_a;
  if (c.paradigm != train::Paradigm::from_scratch) {
    train::StageASpec spec = c.stage_a_spec();
    out << (spec.checkpoint ? "loading stage-A checkpoint\n" : "training stage A\n");
    stage_a = train::obtain_stage_a(c.model, spec, c.proposer);
    if (!spec.checkpoint) train::save_checkpoint(run_dir / "stage_a", *stage_a);
  }
  auto model = train::build_stage_b_model(c.paradigm, c.model, stage_a ? &*stage_a : nullptr,
                                          derive_seed(c.seed, "init", 1));
  train::PretrainHooks hooks;
  hooks.run_dir = run_dir;
  hooks.config_echo = echo;
  hooks.on_epoch = [&](const train::EpochRecord& r, const vit::MaskedAutoencoder&) {
    out << "epoch " << r.epoch << "  loss " << fmt("%.5f", r.smoothed_loss) << "  lr " << fmt("%.3g", r.lr)
        << "  fallback " << fmt("%.3f", r.fallback_crop_rate) << "\n";
  };
  const train::PretrainResult res = train::run_pretraining(*model, c.paradigm, data, c.pretrain_config(), hooks);

  if (!res.epochs.empty()) {
    std::vector<std::size_t> ep;
    std::vector<double> loss;
    for (const auto& r : res.epochs) {
      ep.push_back(r.epoch);
      loss.push_back(r.smoothed_loss);
    }
    const std::size_t w = std::min(c.analysis.window, loss.size());
    write_json(run_dir / "exports" / "loss_curve.json",
               analysis::loss_curves_json({analysis::make_loss_curve(train::to_string(c.paradigm), ep, loss, w)}));
  }
  out << "steps: " << res.steps << "\n";
  if (!res.final_digest.empty()) out << "final checkpoint sha256: " << res.final_digest << "\n";
  return 0;
}

int cmd_probe(const CliOptions& o, const fs::path& run_dir, const RunConfig& c, std::ostream& out) {
  train::ProbeSpec spec = c.probe;
  spec.seed = c.seed;
  const train::ProbeReport r = train::run_probe(train::load_checkpoint(o.checkpoints.at(0)), spec);
  const json j = {{"checkpoint", o.checkpoints.at(0)},
                  {"num_classes", r.num_classes},
                  {"chance", r.chance},
                  {"initial_test_accuracy", r.initial_test_accuracy},
                  {"train_accuracy", r.train_accuracy},
                  {"test_accuracy", r.test_accuracy},
                  {"steps", r.steps},
                  {"epoch_loss", r.epoch_loss}};
  write_json(run_dir / "probe.json", j);
  out << "chance " << fmt("%.3f", r.chance) << "  untrained head " << fmt("%.3f", r.initial_test_accuracy)
      << "  train " << fmt("%.3f", r.train_accuracy) << "  test " << fmt("%.3f", r.test_accuracy) << "\n";
  return 0;
}

int cmd_paradigms(const fs::path& run_dir, const RunConfig& c, std::ostream& out) {
  const train::SuiteReport rep = train::run_paradigm_suite(c.suite_config());
  write_json(run_dir / "paradigms.json", train::suite_report_json(rep));
  const std::string table = train::suite_report_table(rep);
  std::ofstream(run_dir / "paradigms.txt") << table;
  out << table;
  return 0;
}

int cmd_analyze(const CLI::App& sub, const CliOptions& o, const fs::path& run_dir, const RunConfig& c,
                std::ostream& out) {
  const std::string name = sub.get_name();
  if (name == "scale-maps") {
    auto model = load_model(o.checkpoints.at(0));
    const ImageSet imgs = analysis_images(c, model->config().image_size);
    std::vector<std::size_t> layers = c.analysis.layers;
    if (layers.empty()) {
      for (std::size_t l = 0; l < model->config().depth; ++l) layers.push_back(l);
    }
    const auto maps = analysis::compute_scale_maps(*model, imgs.normalized, layers);
    analysis::write_scale_maps(run_dir / "scale_maps", maps, c.analysis.upscale);
    out << "wrote " << maps.size() << " scale maps to " << (run_dir / "scale_maps").string() << "\n";
  } else if (name == "histograms") {
    std::vector<std::pair<std::string, std::vector<analysis::LayerHistogram>>> sets;
    for (const std::string& arg : o.checkpoints) {
      const auto [label, dir] = labelled(arg);
      auto model = load_model(dir);
      const ImageSet imgs = analysis_images(c, model->config().image_size);
      sets.emplace_back(label, analysis::scale_histograms(*model, imgs.normalized, c.analysis.bins));
      for (const auto& h : sets.back().second) {
        out << label << " layer " << h.layer << "  mean " << fmt("%.4f", h.mean) << "  std "
            << fmt("%.4f", h.stddev) << "\n";
      }
    }
    write_json(run_dir / "histograms.json", analysis::histograms_json(sets));
  } else if (name == "attention") {
    auto model = load_model(o.checkpoints.at(0));
    const ImageSet imgs = analysis_images(c, model->config().image_size);
    const auto maps = analysis::compute_attention_maps(*model, imgs.normalized, o.attention_layer, o.scale_override);
    analysis::write_attention_maps(run_dir / "attention", maps, o.overlay ? &imgs.raw : nullptr, c.analysis.upscale);
    out << "wrote " << maps.size() << " attention maps to " << (run_dir / "attention").string() << "\n";
  } else if (name == "scale-dynamics") {
    analysis::ToyAdapterSpec spec = c.analysis.toy;
    spec.seed = derive_seed(c.seed, "toy");
    const auto rep = analysis::scale_dynamics_experiment(c.analysis.k_values, spec);
    write_json(run_dir / "scale_dynamics.json", analysis::scale_dynamics_json(rep));
    out << "k        |dW_up|      ratio    |dy|         ratio\n";
    for (const auto& r : rep.rows) {
      out << fmt("%-8g", r.k) << " " << fmt("%-12.6g", r.dw_norm) << " " << fmt("%-8.4f", r.dw_ratio) << " "
          << fmt("%-12.6g", r.dy_norm) << " " << fmt("%-8.4f", r.dy_ratio) << "\n";
    }
  } else if (name == "param-count") {
    out << analysis::format_param_counts(analysis::report_param_counts(c.model));
    vit::ViTConfig vanilla = c.model;
    vanilla.adapter.enabled = true;
    vanilla.adapter.scale_mode = adapter::ScaleMode::layerwise_frozen;
    const auto v = analysis::report_param_counts(vanilla).pad_trainable_encoder;
    out << "vanilla adapter (fixed layerwise scale): " << v << " (" << analysis::millions(v) << ")\n";
    for (const auto& s : split_list(o.middle_dims)) {
      vit::ViTConfig m = c.model;
      m.adapter.middle_dim = std::stoul(s);
      const auto r = analysis::report_param_counts(m);
      out << "middle_dim " << s << ": PAD-trainable encoder params " << r.pad_trainable_encoder << " ("
          << analysis::millions(r.pad_trainable_encoder) << ")\n";
    }
  } else if (name == "loss-curves") {
    std::vector<analysis::LossCurve> curves;
    for (const std::string& arg : o.logs) {
      const auto [label, path] = labelled(arg);
      std::vector<std::size_t> ep;
      std::vector<double> loss;
      for (const auto& r : train::read_epoch_log(path)) {
        ep.push_back(r.epoch);
        loss.push_back(r.smoothed_loss);
      }
      if (loss.empty()) throw std::runtime_error(path + ": no epochs");
      curves.push_back(analysis::make_loss_curve(label, ep, loss, std::min(c.analysis.window, loss.size())));
      out << label << ": " << loss.size() << " epochs, last smoothed loss "
          << fmt("%.5f", curves.back().smoothed.back()) << "\n";
    }
    write_json(run_dir / "loss_curves.json", analysis::loss_curves_json(curves));
  }
  return 0;
}

}  // namespace

int run_command(const CLI::App& app, const CliOptions& o, std::ostream& out) {
  const auto subs = app.get_subcommands();
  if (subs.empty()) throw std::logic_error("no subcommand");
  const CLI::App* sub = subs.front();
  const RunConfig c = resolve_config(o);
  const fs::path run_dir = o.run_dir.empty() ? fs::path("runs") / sub->get_name() : fs::path(o.run_dir);
  const std::string name = sub->get_name();
  if (name == "generate") return cmd_generate(o, c, out);
  if (name == "prepare") return cmd_prepare(o, c, out);
  if (name == "pretrain") return cmd_pretrain(run_dir, c, out);
  if (name == "probe") return cmd_probe(o, run_dir, c, out);
  if (name == "paradigms") return cmd_paradigms(run_dir, c, out);
  if (name == "analyze") return cmd_analyze(*sub->get_subcommands().front(), o, run_dir, c, out);
  throw std::logic_error("unhandled subcommand " + name);
}

}  // namespace padmae::cli
