// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "padmae/train/config_json.hpp"

namespace padmae::cli {

using nlohmann::json;
using train::ConfigError;
using train::JsonFields;

RunConfig default_config(std::string_view profile) {
  RunConfig c;
  if (profile == "desk") {
    c.profile = "desk";
    c.model = vit::ViTConfig::desk();
    c.corpus = {preprocess::CorpusKind::thermal, 256, 32, 0};
    c.stage_a_corpus = {preprocess::CorpusKind::textured, 256, 32, 0};
    c.proposer.segment.k = 100.0;
    c.proposer.segment.min_size = 10;
    c.crop.l_min = 12.0;
    c.crop.output_size = 32;
    c.optimizer.base_lr = 4e-2;
    c.optimizer.batch_size = 32;
    c.schedule.warmup_epochs = 5;
    c.schedule.total_epochs = 10;
    c.schedule.layerwise_decay_rate = 0.7;
    c.stage_a_epochs = 20;
    c.stage_a_base_lr = 2e-2;
  } else if (profile == "paper") {
    c.profile = "paper";
    c.model = vit::ViTConfig::paper();
    c.corpus = {preprocess::CorpusKind::thermal, 256, 224, 0};
    c.stage_a_corpus = {preprocess::CorpusKind::textured, 256, 224, 0};
    c.crop.output_size = 224;
    c.optimizer.base_lr = 1e-4;
    c.optimizer.batch_size = 4096;
    c.schedule.warmup_epochs = 30;
    c.schedule.total_epochs = 100;
    c.schedule.layerwise_decay_rate = 0.7;
    c.stage_a_epochs = 100;
    c.stage_a_base_lr = 1e-4;
    c.probe.source_size = 224;
    c.analysis.source_size = 224;
  } else {
    throw ConfigError("unknown profile '" + std::string(profile) + "' (expected desk or paper)");
  }
  return c;
}

namespace {

void read_corpus(train::CorpusSpec& c, const json& j, const std::string& path) {
  JsonFields f(j, path);
  f.get_enum("kind", c.kind, preprocess::parse_corpus_kind);
  f.get("count", c.count);
  f.get("size", c.size);
  f.get("seed", c.seed);
  f.finish();
}

json corpus_json(const train::CorpusSpec& c) {
  return {{"kind", c.kind == preprocess::CorpusKind::thermal ? "thermal" : "textured"},
          {"count", c.count},
          {"size", c.size},
          {"seed", c.seed}};
}

template <typename T>
void get_optional(JsonFields& f, const char* key, std::optional<T>& out) {
  if (const json* v = f.child(key)) {
    if (v->is_null()) {
      out.reset();
    } else {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError("bad value for '" + f.key_path(key) + "': " + v->dump());
      }
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::optional<std::string>& profile_override) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  JsonFields root(doc, "");
  std::string profile = "desk";
  root.get("profile", profile);
  if (profile_override) profile = *profile_override;
  RunConfig c = default_config(profile);

  if (const json* m = root.child("model")) {
    json model = *m;
    if (model.is_object() && model.contains("mask_ratio")) {
      try {
        c.mask_ratio = model.at("mask_ratio").get<double>();
      } catch (const json::exception&) {
        throw ConfigError("bad value for 'model.mask_ratio'");
      }
      model.erase("mask_ratio");
    }
    if (model.is_object() && model.contains("adapter")) throw ConfigError("unknown key 'model.adapter' (use the adapter section)");
    train::update_from_json(c.model, model, "model");
  }
  if (const json* a = root.child("adapter")) train::update_from_json(c.model.adapter, *a, "adapter");
  if (const json* d = root.child("data")) {
    JsonFields f(*d, "data");
    get_optional(f, "manifest", c.manifest);
    if (const json* s = f.child("synthetic")) read_corpus(c.corpus, *s, "data.synthetic");
    if (const json* p = f.child("proposer")) train::update_from_json(c.proposer, *p, "data.proposer");
    f.finish();
  }
  if (const json* cr = root.child("crop")) {
    json crop = *cr;
    if (crop.is_object() && crop.contains("roi_crop")) {
      if (!crop.at("roi_crop").is_boolean()) throw ConfigError("bad value for 'crop.roi_crop'");
      c.roi_crop = crop.at("roi_crop").get<bool>();
      crop.erase("roi_crop");
    }
    train::update_from_json(c.crop, crop, "crop");
  }
  if (const json* o = root.child("optimizer")) train::update_from_json(c.optimizer, *o, "optimizer");
  if (const json* s = root.child("schedule")) train::update_from_json(c.schedule, *s, "schedule");
  if (const json* p = root.child("paradigm")) {
    JsonFields f(*p, "paradigm");
    f.get_enum("kind", c.paradigm, train::parse_paradigm);
    f.get("ps_unfreeze_fraction", c.ps_unfreeze_fraction);
    f.get("learnable_layer_scale", c.learnable_layer_scale);
    f.get("checkpoint_every", c.checkpoint_every);
    f.get("suite_seeds", c.suite_seeds);
    if (const json* a = f.child("stage_a")) {
      JsonFields g(*a, "paradigm.stage_a");
      get_optional(g, "checkpoint", c.stage_a_checkpoint);
      if (const json* s = g.child("corpus")) read_corpus(c.stage_a_corpus, *s, "paradigm.stage_a.corpus");
      g.get("epochs", c.stage_a_epochs);
      g.get("base_lr", c.stage_a_base_lr);
      g.finish();
    }
    f.finish();
  }
  if (const json* p = root.child("probe")) {
    JsonFields f(*p, "probe");
    f.get_enum("kind", c.probe.kind, preprocess::parse_corpus_kind);
    f.get("train_images", c.probe.train_images);
    f.get("test_images", c.probe.test_images);
    f.get("source_size", c.probe.source_size);
    f.get("epochs", c.probe.epochs);
    f.get("batch_size", c.probe.batch_size);
    f.get("lr", c.probe.lr);
    f.get("weight_decay", c.probe.weight_decay);
    f.get("layer_decay", c.probe.layer_decay);
    f.get("freeze_backbone", c.probe.freeze_backbone);
    f.finish();
  }
  if (const json* a = root.child("analysis")) {
    JsonFields f(*a, "analysis");
    f.get_enum("kind", c.analysis.kind, preprocess::parse_corpus_kind);
    f.get("images", c.analysis.images);
    f.get("source_size", c.analysis.source_size);
    f.get("layers", c.analysis.layers);
    f.get("bins", c.analysis.bins);
    f.get("window", c.analysis.window);
    f.get("upscale", c.analysis.upscale);
    f.get("k_values", c.analysis.k_values);
    if (const json* t = f.child("toy")) {
      JsonFields g(*t, "analysis.toy");
      g.get("dim", c.analysis.toy.dim);
      g.get("middle_dim", c.analysis.toy.middle_dim);
      g.get("tokens", c.analysis.toy.tokens);
      g.get("lr", c.analysis.toy.lr);
      g.get("loss_steps", c.analysis.toy.loss_steps);
      g.finish();
    }
    f.finish();
  }
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.finish();

  c.model.validate();
  c.pretrain_config().validate();
  return c;
}

json to_json(const RunConfig& c) {
  json model = train::to_json(c.model);
  json adapter = model.at("adapter");
  model.erase("adapter");
  model["mask_ratio"] = c.mask_ratio;
  json crop = train::to_json(c.crop);
  crop["roi_crop"] = c.roi_crop;
  json a = {{"kind", c.analysis.kind == preprocess::CorpusKind::thermal ? "thermal" : "textured"},
            {"images", c.analysis.images},
            {"source_size", c.analysis.source_size},
            {"layers", c.analysis.layers},
            {"bins", c.analysis.bins},
            {"window", c.analysis.window},
            {"upscale", c.analysis.upscale},
            {"k_values", c.analysis.k_values},
            {"toy", {{"dim", c.analysis.toy.dim},
                     {"middle_dim", c.analysis.toy.middle_dim},
                     {"tokens", c.analysis.toy.tokens},
                     {"lr", c.analysis.toy.lr},
                     {"loss_steps", c.analysis.toy.loss_steps}}}};
  return {{"profile", c.profile},
          {"model", model},
          {"adapter", adapter},
          {"data", {{"manifest", c.manifest ? json(*c.manifest) : json(nullptr)},
                    {"synthetic", corpus_json(c.corpus)},
                    {"proposer", train::to_json(c.proposer)}}},
          {"crop", crop},
          {"optimizer", train::to_json(c.optimizer)},
          {"schedule", train::to_json(c.schedule)},
          {"paradigm", {{"kind", train::to_string(c.paradigm)},
                        {"ps_unfreeze_fraction", c.ps_unfreeze_fraction},
                        {"learnable_layer_scale", c.learnable_layer_scale},
                        {"checkpoint_every", c.checkpoint_every},
                        {"suite_seeds", c.suite_seeds},
                        {"stage_a", {{"checkpoint", c.stage_a_checkpoint ? json(*c.stage_a_checkpoint) : json(nullptr)},
                                     {"corpus", corpus_json(c.stage_a_corpus)},
                                     {"epochs", c.stage_a_epochs},
                                     {"base_lr", c.stage_a_base_lr}}}}},
          {"probe", {{"kind", c.probe.kind == preprocess::CorpusKind::thermal ? "thermal" : "textured"},
                     {"train_images", c.probe.train_images},
                     {"test_images", c.probe.test_images},
                     {"source_size", c.probe.source_size},
                     {"epochs", c.probe.epochs},
                     {"batch_size", c.probe.batch_size},
                     {"lr", c.probe.lr},
                     {"weight_decay", c.probe.weight_decay},
                     {"layer_decay", c.probe.layer_decay},
                     {"freeze_backbone", c.probe.freeze_backbone}}},
          {"analysis", a},
          {"seed", c.seed},
          {"threads", c.threads}};
}

train::PretrainConfig RunConfig::pretrain_config() const {
  train::PretrainConfig p;
  p.epochs = schedule.total_epochs;
  p.mask_ratio = mask_ratio;
  p.optimizer = optimizer;
  p.schedule = schedule;
  p.ps_unfreeze_fraction = ps_unfreeze_fraction;
  p.layer_decay = paradigm == train::Paradigm::full_from_init ? schedule.layerwise_decay_rate : std::nullopt;
  p.learnable_layer_scale = learnable_layer_scale;
  p.roi_crop = roi_crop;
  p.crop = crop;
  p.checkpoint_every = checkpoint_every;
  p.seed = derive_seed(seed, "stage-b");
  p.threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  return p;
}

train::StageASpec RunConfig::stage_a_spec() const {
  train::StageASpec s;
  if (stage_a_checkpoint) s.checkpoint = *stage_a_checkpoint;
  s.corpus = stage_a_corpus;
  s.corpus.seed = derive_seed(seed, "stage-a-corpus", stage_a_corpus.seed);
  s.train = pretrain_config();
  s.train.layer_decay.reset();
  s.train.epochs = stage_a_epochs;
  s.train.schedule.warmup_epochs = std::min(schedule.warmup_epochs, stage_a_epochs);
  s.train.optimizer.base_lr = stage_a_base_lr;
  s.train.seed = derive_seed(seed, "stage-a");
  return s;
}

train::CorpusSpec RunConfig::target_corpus() const {
  train::CorpusSpec t = corpus;
  t.seed = derive_seed(seed, "target-corpus", corpus.seed);
  return t;
}

train::SuiteConfig RunConfig::suite_config() const {
  train::SuiteConfig s;
  s.model = model;
  s.stage_a = stage_a_spec();
  s.target = corpus;
  s.stage_b = pretrain_config();
  s.stage_b.layer_decay.reset();
  s.full_layer_decay = schedule.layerwise_decay_rate;
  s.probe = probe;
  s.seeds.clear();
  for (std::uint64_t k : suite_seeds) s.seeds.push_back(seed + k);
  s.proposer = proposer;
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace padmae::cli
