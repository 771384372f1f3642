// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/pretraining.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "padmae/mae/pretrain.hpp"

namespace padmae::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

preprocess::Dataset synthetic_dataset(const CorpusSpec& spec,
                                      const preprocess::SelectiveSearchParams& proposer,
                                      std::size_t threads) {
  if (spec.count == 0) throw std::invalid_argument("synthetic corpus must not be empty");
  preprocess::Dataset ds;
  ds.images.resize(spec.count);
  ds.rois.resize(spec.count);
  parallel_for(spec.count, threads, [&](std::size_t i) {
    ds.images[i] = preprocess::corpus_image(spec.kind, spec.size, spec.seed, i);
    ds.rois[i] = preprocess::selective_search(ds.images[i], proposer);
  });
  std::array<double, 6> acc{};
  for (std::size_t i = 0; i < spec.count; ++i) {
    ds.paths.push_back("synthetic:" + std::to_string(spec.seed) + ":" + std::to_string(i));
    const Image& img = ds.images[i];
    for (std::size_t p = 0; p < img.width * img.height; ++p)
      for (int c = 0; c < 3; ++c) {
        const double v = img.data[p * 3 + c];
        acc[c] += v;
        acc[3 + c] += v * v;
      }
  }
  const double n = static_cast<double>(spec.count * spec.size * spec.size);
  for (int c = 0; c < 3; ++c) {
    ds.mean[c] = acc[c] / n;
    ds.std[c] = std::max(std::sqrt(std::max(acc[3 + c] / n - ds.mean[c] * ds.mean[c], 0.0)), 1e-6);
  }
  return ds;
}

void PretrainConfig::validate() const {
  optimizer.validate();
  ScheduleConfig s = schedule;
  s.total_epochs = epochs;
  s.validate();
  crop.validate();
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("mask_ratio must lie in [0, 1)");
  if (!(ps_unfreeze_fraction >= 0.0 && ps_unfreeze_fraction <= 1.0)) {
    throw std::invalid_argument("ps_unfreeze_fraction must lie in [0, 1]");
  }
}

std::string epoch_record_json(const EpochRecord& r) {
  json j = {{"epoch", r.epoch},
            {"smoothed_loss", r.smoothed_loss},
            {"lr", r.lr},
            {"fallback_crop_rate", r.fallback_crop_rate},
            {"wall_time", r.wall_time}};
  return j.dump();
}

EpochRecord parse_epoch_record(const std::string& line) {
  const json j = json::parse(line);
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.smoothed_loss = j.at("smoothed_loss").get<double>();
  r.lr = j.at("lr").get<double>();
  r.fallback_crop_rate = j.at("fallback_crop_rate").get<double>();
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

std::vector<EpochRecord> read_epoch_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read epoch log " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_epoch_record(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

EpochSamples prepare_epoch(const preprocess::Dataset& data, const vit::ViTConfig& model,
                           const PretrainConfig& cfg, std::size_t epoch) {
  const std::size_t n = data.size();
  EpochSamples s;
  s.images.resize(n);
  s.masks.resize(n);
  std::vector<char> fell_back(n, 0);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const Image& src = data.images[i];
    Rng crop_rng(derive_seed(cfg.seed, "crop", i, epoch));
    preprocess::RoIBox box;
    if (cfg.roi_crop) {
      const preprocess::CropResult r =
          preprocess::random_roi_crop(src.width, src.height, data.rois[i], cfg.crop, crop_rng);
      box = r.box;
      fell_back[i] = r.fallback;
    } else {
      box = preprocess::random_resized_crop(src.width, src.height, crop_rng);
      fell_back[i] = 1;
    }
    s.images[i] = preprocess::normalize_image(
        preprocess::crop_and_resize(src, box, model.image_size), data.mean, data.std);
    Rng mask_rng(derive_seed(cfg.seed, "mask", i, epoch));
    s.masks[i] = mae::random_masking(model.num_patches(), cfg.mask_ratio, mask_rng);
  });
  for (char f : fell_back) s.fallbacks += static_cast<std::size_t>(f);
  return s;
}

namespace {

std::string frozen_digest(const ad::ParamStore& store) {
  return params_digest(store, [](const ad::Param& p) { return !p.trainable; });
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

}  // namespace

PretrainResult run_pretraining(vit::MaskedAutoencoder& model, Paradigm paradigm,
                               const preprocess::Dataset& data, const PretrainConfig& cfg,
                               const PretrainHooks& hooks) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("run_pretraining: empty dataset");
  PretrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const vit::ViTConfig& mc = model.config();

  std::ofstream log;
  if (!hooks.run_dir.empty()) {
    fs::create_directories(hooks.run_dir / "checkpoints");
    log.open(hooks.run_dir / "epochs.log");
  }
  Optimizer optimizer(cfg.optimizer);
  auto write_checkpoint = [&](const std::string& tag, std::size_t epoch) {
    Checkpoint c = capture_checkpoint(model.params(), mc, &optimizer);
    c.config_echo = hooks.config_echo;
    c.epoch = epoch;
    c.step = result.steps;
    c.rng_states["root_seed"] = std::to_string(cfg.seed);
    c.meta["paradigm"] = to_string(paradigm);
    return save_checkpoint(hooks.run_dir / "checkpoints" / tag, c);
  };

  const std::size_t epochs = paradigm == Paradigm::cross_domain ? 0 : cfg.epochs;
  PolicyOptions po;
  po.depth = mc.depth;
  po.total_epochs = std::max<std::size_t>(cfg.epochs, 1);
  po.ps_unfreeze_fraction = cfg.ps_unfreeze_fraction;
  po.layer_decay = cfg.layer_decay;
  po.learnable_layer_scale = cfg.learnable_layer_scale;
  const ParamGroupPolicy policy = make_policy(paradigm, model.params(), po);
  ScheduleConfig schedule = cfg.schedule;
  schedule.total_epochs = cfg.epochs;
  const std::size_t bs = cfg.optimizer.batch_size;
  const std::size_t steps_per_epoch = (data.size() + bs - 1) / bs;
  const double peak = effective_lr(cfg.optimizer.base_lr, bs);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    policy.apply(model.params(), epoch);
    const std::string frozen_before = frozen_digest(model.params());
    EpochSamples samples = prepare_epoch(data, mc, cfg, epoch);
    const std::vector<std::size_t> order = epoch_order(data.size(), cfg.seed, epoch);
    double loss_sum = 0.0, lr = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      mae::PretrainBatch batch;
      for (std::size_t k = s * bs; k < std::min(data.size(), (s + 1) * bs); ++k) {
        const std::size_t i = order[k];
        batch.images.push_back(std::move(samples.images[i]));
        batch.masks.push_back(std::move(samples.masks[i]));
        batch.provenance.push_back(data.paths[i] + " (epoch " + std::to_string(epoch) + ")");
      }
      lr = scheduled_lr(schedule, epoch * steps_per_epoch + s, steps_per_epoch, peak);
      const double loss = mae::pretrain_step(batch, model, optimizer, policy, epoch, lr);
      if (!result.initial_loss) result.initial_loss = loss;
      loss_sum += loss;
      ++result.steps;
    }
    if (frozen_digest(model.params()) != frozen_before) {
      throw std::logic_error("frozen parameters changed during epoch " + std::to_string(epoch));
    }
    for (const ad::Param* p : model.params().all()) {
      if (!p->trainable && optimizer.moments().count(p->name)) {
        throw std::logic_error("frozen parameter " + p->name + " holds optimizer state");
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.smoothed_loss = loss_sum / static_cast<double>(steps_per_epoch);
    rec.lr = lr;
    rec.fallback_crop_rate = static_cast<double>(samples.fallbacks) / static_cast<double>(data.size());
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);
    if (log.is_open()) log << epoch_record_json(rec) << "\n" << std::flush;
    if (hooks.on_epoch) hooks.on_epoch(rec, model);
    if (!hooks.run_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::ostringstream tag;
      tag << "epoch_" << std::setw(4) << std::setfill('0') << epoch + 1;
      write_checkpoint(tag.str(), epoch + 1);
    }
  }
  if (!hooks.run_dir.empty()) result.final_digest = write_checkpoint("final", epochs);
  return result;
}

Checkpoint obtain_stage_a(const vit::ViTConfig& model, const StageASpec& spec,
                          const preprocess::SelectiveSearchParams& proposer) {
  if (spec.checkpoint) return load_checkpoint(*spec.checkpoint);
  vit::ViTConfig cfg = model;
  cfg.adapter.enabled = false;
  vit::MaskedAutoencoder m(cfg, derive_seed(spec.train.seed, "init", 0));
  const preprocess::Dataset data = synthetic_dataset(spec.corpus, proposer, spec.train.threads);
  run_pretraining(m, Paradigm::from_scratch, data, spec.train);
  Checkpoint c = capture_checkpoint(m.params(), cfg);
  c.epoch = spec.train.epochs;
  c.meta["stage"] = "A";
  return c;
}

std::unique_ptr<vit::MaskedAutoencoder> build_stage_b_model(Paradigm paradigm,
                                                            const vit::ViTConfig& model,
                                                            const Checkpoint* stage_a,
                                                            std::uint64_t init_seed) {
  auto m = std::make_unique<vit::MaskedAutoencoder>(model, init_seed);
  if (paradigm == Paradigm::from_scratch) return m;
  if (!stage_a) {
    throw std::invalid_argument("paradigm " + to_string(paradigm) + " requires stage-A weights");
  }
  restore_params(m->params(), *stage_a, LoadScope::backbone_and_decoder);
  return m;
}

}  // namespace padmae::train
