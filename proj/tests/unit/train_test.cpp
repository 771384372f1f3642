// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "padmae/train/checkpoint.hpp"
#include "padmae/train/config_json.hpp"
#include "padmae/train/paradigms.hpp"
#include "padmae/train/pretraining.hpp"
#include "padmae/train/probe.hpp"

namespace padmae::train {
namespace {

namespace fs = std::filesystem;

vit::ViTConfig tiny() {
  vit::ViTConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.decoder_dim = 16;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.adapter.middle_dim = 4;
  return c;
}

preprocess::SelectiveSearchParams proposer() {
  preprocess::SelectiveSearchParams p;
  p.segment.k = 100.0;
  p.segment.min_size = 10;
  return p;
}

preprocess::Dataset tiny_data(std::size_t n, std::uint64_t seed = 3) {
  return synthetic_dataset({preprocess::CorpusKind::thermal, n, 16, seed}, proposer());
}

PretrainConfig tiny_run(std::size_t epochs) {
  PretrainConfig c;
  c.epochs = epochs;
  c.optimizer.base_lr = 2e-2;
  c.optimizer.batch_size = 8;
  c.schedule.warmup_epochs = 1;
  c.schedule.total_epochs = epochs;
  c.crop.l_min = 6.0;
  c.crop.output_size = 16;
  c.seed = 5;
  c.threads = 1;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("padmae_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool is_ps(const ad::Param& p) { return p.name.find("ps.weight") != std::string::npos; }

TEST(Checkpoint, RoundTripIsByteIdentical) {
  vit::MaskedAutoencoder model(tiny(), 1);
  const fs::path dir = scratch("roundtrip");
  const Checkpoint a = capture_checkpoint(model.params(), model.config());
  const std::string digest = save_checkpoint(dir / "a", a);
  EXPECT_EQ(digest, checkpoint_digest(dir / "a"));

  const Checkpoint loaded = load_checkpoint(dir / "a");
  EXPECT_EQ(save_checkpoint(dir / "b", loaded), digest);
  EXPECT_EQ(file_bytes(dir / "a" / "payload.bin"), file_bytes(dir / "b" / "payload.bin"));

  // Restoring into a model and capturing again is stable too.
  vit::MaskedAutoencoder other(loaded.model, 99);
  restore_params(other.params(), loaded, LoadScope::all);
  EXPECT_EQ(save_checkpoint(dir / "c", capture_checkpoint(other.params(), other.config())), digest);
}

TEST(Checkpoint, ValuesAreFloat32Rounded) {
  vit::MaskedAutoencoder model(tiny(), 2);
  const fs::path dir = scratch("f32");
  save_checkpoint(dir, capture_checkpoint(model.params(), model.config()));
  const Checkpoint c = load_checkpoint(dir);
  for (const auto& [name, t] : c.params) {
    const ad::Tensor& orig = model.params().get(name).value;
    ASSERT_EQ(orig.shape(), t.shape()) << name;
    for (std::size_t i = 0; i < t.storage().size(); ++i) {
      ASSERT_EQ(t.storage()[i], static_cast<double>(static_cast<float>(orig.storage()[i]))) << name;
    }
  }
}

TEST(Checkpoint, BackboneOnlyLoadKeepsAdapters) {
  const fs::path dir = scratch("partial");
  vit::MaskedAutoencoder src(tiny(), 1);
  save_checkpoint(dir, capture_checkpoint(src.params(), src.config()));
  const Checkpoint ck = load_checkpoint(dir);

  vit::MaskedAutoencoder ref(tiny(), 1);
  restore_params(ref.params(), ck, LoadScope::all);

  vit::MaskedAutoencoder dst(tiny(), 2);
  std::map<std::string, ad::Tensor> before;
  for (const ad::Param* p : dst.params().all()) before.emplace(p->name, p->value);
  restore_params(dst.params(), ck, LoadScope::backbone);

  EXPECT_EQ(backbone_digest(dst.params()), backbone_digest(ref.params()));
  std::size_t adapters = 0;
  for (const ad::Param* p : dst.params().all()) {
    if (is_backbone_param(p->name)) continue;
    EXPECT_TRUE(p->value == before.at(p->name)) << p->name;
    adapters += p->name.find("adapter") != std::string::npos;
  }
  EXPECT_GT(adapters, 0u);
}

TEST(Checkpoint, BackboneSelectionExcludesAdaptersAndDecoder) {
  vit::MaskedAutoencoder model(tiny(), 1);
  for (const ad::Param* p : model.params().all()) {
    const bool encoder = p->name.rfind("encoder.", 0) == 0;
    const bool adapter = p->name.find("adapter") != std::string::npos;
    EXPECT_EQ(is_backbone_param(p->name), encoder && !adapter) << p->name;
  }
}

TEST(Checkpoint, CorruptPayloadIsRejected) {
  vit::MaskedAutoencoder model(tiny(), 1);
  const fs::path dir = scratch("corrupt");
  save_checkpoint(dir, capture_checkpoint(model.params(), model.config()));
  {
    std::fstream f(dir / "payload.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(40);
    char b = 0;
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x5a);
    f.seekp(40);
    f.write(&b, 1);
  }
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);

  const fs::path dir2 = scratch("truncated");
  save_checkpoint(dir2, capture_checkpoint(model.params(), model.config()));
  const std::string bytes = file_bytes(dir2 / "payload.bin");
  std::ofstream(dir2 / "payload.bin", std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 4);
  EXPECT_THROW(load_checkpoint(dir2), CheckpointError);
  EXPECT_THROW(load_checkpoint(scratch("empty")), CheckpointError);
}

TEST(Checkpoint, MismatchNamesTheTensor) {
  vit::MaskedAutoencoder model(tiny(), 1);
  const Checkpoint ck = capture_checkpoint(model.params(), model.config());

  vit::ViTConfig deeper = tiny();
  deeper.depth = 3;
  vit::MaskedAutoencoder big(deeper, 1);
  try {
    restore_params(big.params(), ck, LoadScope::all);
    FAIL() << "missing tensor accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.blocks.2"), std::string::npos) << e.what();
  }

  vit::ViTConfig wider = tiny();
  wider.adapter.middle_dim = 6;
  vit::MaskedAutoencoder w(wider, 1);
  try {
    restore_params(w.params(), ck, LoadScope::all);
    FAIL() << "shape mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("adapter"), std::string::npos) << e.what();
  }
}

TEST(Pretrain, PadKeepsBackboneAndDelaysScaleModule) {
  vit::MaskedAutoencoder model(tiny(), 4);
  const preprocess::Dataset data = tiny_data(16);
  const PretrainConfig cfg = tiny_run(5);
  ASSERT_EQ(ps_unfreeze_epoch(cfg.ps_unfreeze_fraction, cfg.epochs), 3u);

  const std::string backbone0 = backbone_digest(model.params());
  const std::string ps0 = params_digest(model.params(), is_ps);
  const std::string up0 = params_digest(model.params(), [](const ad::Param& p) {
    return p.name.find("up.weight") != std::string::npos;
  });
  std::vector<std::string> ps_after, backbone_after, up_after;
  PretrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord&, const vit::MaskedAutoencoder& m) {
    auto& store = const_cast<vit::MaskedAutoencoder&>(m).params();
    ps_after.push_back(params_digest(store, is_ps));
    backbone_after.push_back(backbone_digest(store));
    up_after.push_back(params_digest(store, [](const ad::Param& p) {
      return p.name.find("up.weight") != std::string::npos;
    }));
  };
  const PretrainResult r = run_pretraining(model, Paradigm::pad, data, cfg, hooks);
  ASSERT_EQ(r.epochs.size(), 5u);
  for (std::size_t e = 0; e < 5; ++e) {
    EXPECT_EQ(backbone_after[e], backbone0) << e;
    EXPECT_NE(up_after[e], up0) << e;
    if (e < 3) {
      EXPECT_EQ(ps_after[e], ps0) << e;
    } else {
      EXPECT_NE(ps_after[e], ps0) << e;
    }
  }
  EXPECT_EQ(r.steps, 5u * 2u);
  ASSERT_TRUE(r.initial_loss.has_value());
  EXPECT_TRUE(std::isfinite(*r.initial_loss));
}

TEST(Pretrain, FullFromInitUpdatesBackbone) {
  vit::MaskedAutoencoder model(tiny(), 4);
  const std::string b0 = backbone_digest(model.params());
  run_pretraining(model, Paradigm::full_from_init, tiny_data(8), tiny_run(2));
  EXPECT_NE(backbone_digest(model.params()), b0);
}

TEST(Pretrain, CrossDomainPerformsNoSteps) {
  vit::MaskedAutoencoder model(tiny(), 4);
  const std::string all0 = params_digest(model.params(), [](const ad::Param&) { return true; });
  const PretrainResult r = run_pretraining(model, Paradigm::cross_domain, tiny_data(8), tiny_run(3));
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(r.epochs.empty());
  EXPECT_EQ(params_digest(model.params(), [](const ad::Param&) { return true; }), all0);
}

TEST(Pretrain, ResultDoesNotDependOnThreadCount) {
  const preprocess::Dataset data = tiny_data(16);
  std::vector<std::string> digests;
  for (std::size_t threads : {1u, 3u}) {
    vit::MaskedAutoencoder model(tiny(), 4);
    PretrainConfig cfg = tiny_run(2);
    cfg.threads = threads;
    run_pretraining(model, Paradigm::pad, data, cfg);
    digests.push_back(params_digest(model.params(), [](const ad::Param&) { return true; }));
  }
  EXPECT_EQ(digests[0], digests[1]);
}

TEST(Pretrain, WritesLogAndCheckpoints) {
  const fs::path dir = scratch("run");
  vit::MaskedAutoencoder model(tiny(), 4);
  PretrainConfig cfg = tiny_run(3);
  cfg.checkpoint_every = 2;
  PretrainHooks hooks;
  hooks.run_dir = dir;
  hooks.config_echo = "{\"note\":1}";
  const PretrainResult r = run_pretraining(model, Paradigm::pad, tiny_data(8), cfg, hooks);

  const std::vector<EpochRecord> log = read_epoch_log(dir / "epochs.log");
  ASSERT_EQ(log.size(), r.epochs.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].epoch, i);
    EXPECT_DOUBLE_EQ(log[i].smoothed_loss, r.epochs[i].smoothed_loss);
    EXPECT_DOUBLE_EQ(log[i].lr, r.epochs[i].lr);
    EXPECT_GE(log[i].fallback_crop_rate, 0.0);
    EXPECT_LE(log[i].fallback_crop_rate, 1.0);
    if (i > 0) EXPECT_GE(log[i].wall_time, log[i - 1].wall_time);
  }
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "epoch_0002" / "manifest.json"));
  EXPECT_EQ(checkpoint_digest(dir / "checkpoints" / "final"), r.final_digest);

  const Checkpoint ck = load_checkpoint(dir / "checkpoints" / "final");
  EXPECT_EQ(ck.config_echo, "{\"note\":1}");
  EXPECT_EQ(ck.epoch, 3u);
  EXPECT_EQ(ck.step, r.steps);
  EXPECT_FALSE(ck.moments.empty());
  for (const auto& [name, m] : ck.moments) EXPECT_FALSE(is_backbone_param(name)) << name;
}

TEST(Pretrain, EpochRecordParsesBack) {
  const EpochRecord r{7, 0.123456789012, 1.5e-3, 0.25, 3.5};
  const EpochRecord back = parse_epoch_record(epoch_record_json(r));
  EXPECT_EQ(back.epoch, 7u);
  EXPECT_DOUBLE_EQ(back.smoothed_loss, r.smoothed_loss);
  EXPECT_DOUBLE_EQ(back.lr, r.lr);
  EXPECT_DOUBLE_EQ(back.fallback_crop_rate, 0.25);
  EXPECT_THROW(parse_epoch_record("{\"epoch\":1}"), std::exception);
}

TEST(Pretrain, RandomResizedCropOnlyFallsBackEverywhere) {
  const preprocess::Dataset data = tiny_data(8);
  PretrainConfig cfg = tiny_run(1);
  cfg.roi_crop = false;
  const EpochSamples s = prepare_epoch(data, tiny(), cfg, 0);
  EXPECT_EQ(s.fallbacks, data.size());
  cfg.roi_crop = true;
  const EpochSamples t = prepare_epoch(data, tiny(), cfg, 0);
  EXPECT_LT(t.fallbacks, data.size());
  ASSERT_EQ(t.images.size(), data.size());
  for (const Image& img : t.images) {
    EXPECT_EQ(img.width, 16u);
    EXPECT_EQ(img.height, 16u);
  }
  // Same epoch, same samples; a different epoch draws new crops.
  EXPECT_EQ(prepare_epoch(data, tiny(), cfg, 0).images, t.images);
  EXPECT_NE(prepare_epoch(data, tiny(), cfg, 1).images, t.images);
}

TEST(Pretrain, StageBModelsStartFromStageA) {
  vit::ViTConfig plain = tiny();
  plain.adapter.enabled = false;
  vit::MaskedAutoencoder a(plain, 8);
  const Checkpoint ck = capture_checkpoint(a.params(), plain);
  vit::MaskedAutoencoder ref(plain, 0);
  restore_params(ref.params(), ck, LoadScope::all);

  auto pad = build_stage_b_model(Paradigm::pad, tiny(), &ck, 11);
  EXPECT_EQ(backbone_digest(pad->params()), backbone_digest(ref.params()));
  auto scratch_model = build_stage_b_model(Paradigm::from_scratch, tiny(), nullptr, 11);
  EXPECT_NE(backbone_digest(scratch_model->params()), backbone_digest(ref.params()));
  EXPECT_THROW(build_stage_b_model(Paradigm::pad, tiny(), nullptr, 11), std::exception);
}

TEST(Probe, LabelsSplitEveryImageInHalf) {
  const Image img = preprocess::corpus_image(preprocess::CorpusKind::thermal, 16, 4, 0);
  const auto labels = hot_patch_labels(img, 4);
  ASSERT_EQ(labels.size(), 16u);
  std::size_t hot = 0;
  for (std::size_t l : labels) hot += l;
  EXPECT_EQ(hot, 8u);
}

TEST(Probe, ZeroHeadScoresChanceAndRunIsDeterministic) {
  vit::MaskedAutoencoder model(tiny(), 4);
  const Checkpoint ck = capture_checkpoint(model.params(), model.config());
  ProbeSpec spec;
  spec.train_images = 12;
  spec.test_images = 8;
  spec.source_size = 16;
  spec.epochs = 2;
  spec.batch_size = 4;
  const ProbeReport a = run_probe(ck, spec);
  EXPECT_EQ(a.num_classes, 2u);
  EXPECT_EQ(a.chance, 0.5);
  EXPECT_EQ(a.initial_test_accuracy, 0.5);
  EXPECT_EQ(a.steps, 2u * 3u);
  EXPECT_EQ(a.epoch_loss.size(), 2u);
  const ProbeReport b = run_probe(ck, spec);
  EXPECT_EQ(a.test_accuracy, b.test_accuracy);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Suite, ReportHasOneRowPerParadigm) {
  SuiteConfig s;
  s.model = tiny();
  s.stage_a.corpus = {preprocess::CorpusKind::textured, 8, 16, 0};
  s.stage_a.train = tiny_run(1);
  s.target = {preprocess::CorpusKind::thermal, 8, 16, 0};
  s.stage_b = tiny_run(2);
  s.probe.train_images = 4;
  s.probe.test_images = 4;
  s.probe.source_size = 16;
  s.probe.epochs = 1;
  s.probe.batch_size = 4;
  s.seeds = {0};
  s.proposer = proposer();
  const SuiteReport rep = run_paradigm_suite(s);
  ASSERT_EQ(rep.rows.size(), 4u);
  for (const SuiteRow& row : rep.rows) {
    ASSERT_EQ(row.probe_accuracy.size(), 1u);
    EXPECT_GE(row.probe_accuracy[0], 0.0);
    EXPECT_LE(row.probe_accuracy[0], 1.0);
    EXPECT_EQ(row.median_accuracy, row.probe_accuracy[0]);
    if (row.paradigm == Paradigm::cross_domain) {
      EXPECT_EQ(row.stage_b_steps, 0u);
    } else {
      EXPECT_EQ(row.stage_b_steps, 2u);
    }
  }
  const SuiteRow& pad = rep.rows.back();
  EXPECT_EQ(pad.paradigm, Paradigm::pad);
  EXPECT_LT(pad.trainable_encoder_params, rep.rows.front().trainable_encoder_params);

  const auto j = suite_report_json(rep);
  EXPECT_EQ(j.at("rows").size(), 4u);
  const std::string table = suite_report_table(rep);
  for (const char* name : {"from_scratch", "cross_domain", "full_from_init", "pad"}) {
    EXPECT_NE(table.find(name), std::string::npos) << name;
  }
}

TEST(Suite, Median) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), std::exception);
}

TEST(ConfigJson, UnknownKeysNameTheirPath) {
  vit::ViTConfig c = tiny();
  try {
    update_from_json(c, nlohmann::json::parse(R"({"adapter":{"schedule":{"rte":0.5}}})"), "model");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.adapter.schedule.rte"), std::string::npos) << e.what();
  }
  OptimizerConfig o;
  EXPECT_THROW(update_from_json(o, nlohmann::json::parse(R"({"base_lr":"fast"})"), "optimizer"), ConfigError);
  EXPECT_THROW(update_from_json(o, nlohmann::json::parse(R"({"kind":"lion"})"), "optimizer"), ConfigError);
}

TEST(ConfigJson, RoundTrips) {
  vit::ViTConfig c = tiny();
  c.adapter.scale_mode = adapter::ScaleMode::layerwise_learnable;
  c.adapter.schedule.kind = adapter::ScheduleKind::exp_decay;
  c.adapter.layerwise_values = {0.3, 0.7};
  const vit::ViTConfig back = vit_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));

  ScheduleConfig s;
  s.layerwise_decay_rate.reset();
  ScheduleConfig t;
  t.layerwise_decay_rate = 0.5;
  update_from_json(t, to_json(s), "schedule");
  EXPECT_FALSE(t.layerwise_decay_rate.has_value());
}

}  // namespace
}  // namespace padmae::train
