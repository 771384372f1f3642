// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/probe.hpp"

#include <algorithm>
#include <numeric>

#include "padmae/autodiff/ops.hpp"
#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/dataset.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/train/policy.hpp"
#include "padmae/train/schedule.hpp"
#include "padmae/vit/model.hpp"

namespace padmae::train {

using ad::Var;

std::vector<std::size_t> hot_patch_labels(const Image& image, std::size_t patch_size) {
  const std::size_t gw = image.width / patch_size, gh = image.height / patch_size;
  std::vector<double> means(gw * gh, 0.0);
  for (std::size_t y = 0; y < gh * patch_size; ++y)
    for (std::size_t x = 0; x < gw * patch_size; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        means[(y / patch_size) * gw + x / patch_size] += image.at(y, x, c);
  std::vector<std::size_t> order(means.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<std::size_t> labels(means.size(), 0);
  for (std::size_t k = means.size() / 2; k < means.size(); ++k) labels[order[k]] = 1;
  return labels;
}

namespace {

struct ProbeSet {
  std::vector<Image> inputs;
  std::vector<std::vector<std::size_t>> labels;
};

Var patch_features(ad::Tape& tape, vit::MaskedAutoencoder& model, const Image& image) {
  vit::EncoderOutput enc = model.encode(tape, image);
  if (!model.config().use_cls_token) return enc.tokens;
  std::vector<std::size_t> rows(model.config().num_patches());
  std::iota(rows.begin(), rows.end(), 1);
  return ad::gather_rows(enc.tokens, rows);
}

}  // namespace

ProbeReport run_probe(const Checkpoint& backbone, const ProbeSpec& spec) {
  if (spec.train_images == 0 || spec.test_images == 0 || spec.batch_size == 0) {
    throw std::invalid_argument("probe: image counts and batch size must be positive");
  }
  const vit::ViTConfig& mc = backbone.model;
  vit::MaskedAutoencoder model(mc, derive_seed(spec.seed, "probe-init"));
  restore_params(model.params(), backbone, LoadScope::all);

  const std::uint64_t data_seed = derive_seed(spec.seed, "probe");
  auto make = [&](std::size_t first, std::size_t count) {
    std::vector<Image> raw;
    for (std::size_t i = first; i < first + count; ++i) {
      Image img = preprocess::corpus_image(spec.kind, spec.source_size, data_seed, i);
      if (img.width != mc.image_size) {
        img = preprocess::crop_and_resize(
            img, {0, 0, static_cast<double>(img.width), static_cast<double>(img.height)},
            mc.image_size);
      }
      raw.push_back(std::move(img));
    }
    return raw;
  };
  const std::vector<Image> train_raw = make(0, spec.train_images);
  const std::vector<Image> test_raw = make(spec.train_images, spec.test_images);
  std::array<double, 3> mean{}, sd{};
  {
    std::array<double, 6> acc{};
    double n = 0;
    for (const Image& img : train_raw) {
      for (std::size_t p = 0; p < img.width * img.height; ++p)
        for (int c = 0; c < 3; ++c) {
          acc[c] += img.data[p * 3 + c];
          acc[3 + c] += img.data[p * 3 + c] * img.data[p * 3 + c];
        }
      n += static_cast<double>(img.width * img.height);
    }
    for (int c = 0; c < 3; ++c) {
      mean[c] = acc[c] / n;
      sd[c] = std::max(std::sqrt(std::max(acc[3 + c] / n - mean[c] * mean[c], 0.0)), 1e-6);
    }
  }
  auto to_set = [&](const std::vector<Image>& raw) {
    ProbeSet s;
    for (const Image& img : raw) {
      s.inputs.push_back(preprocess::normalize_image(img, mean, sd));
      s.labels.push_back(hot_patch_labels(img, mc.patch_size));
    }
    return s;
  };
  const ProbeSet train = to_set(train_raw);
  const ProbeSet test = to_set(test_raw);

  ad::ParamStore head;
  ad::Param& hw = head.add("probe.head.weight", ad::Tensor({mc.embed_dim, 2}, 0.0));
  ad::Param& hb = head.add("probe.head.bias", ad::Tensor({1, 2}, 0.0), false);

  const std::vector<double> decay = layerwise_decay_lrs(1.0, spec.layer_decay, mc.depth);
  for (ad::Param* p : model.params().all()) {
    const bool encoder = p->name.starts_with("encoder.");
    p->trainable = encoder && !spec.freeze_backbone;
    p->lr_scale = decay[layer_id(p->name, mc.depth)];
  }
  if (mc.adapter.scale_mode == adapter::ScaleMode::layerwise_frozen) {
    for (ad::Param* p : model.params().all())
      if (is_adapter_param(p->name) && p->name.ends_with(".adapter.scale")) p->trainable = false;
  }

  auto accuracy = [&](const ProbeSet& set) {
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < set.inputs.size(); ++i) {
      ad::Tape tape;
      Var logits = ad::linear(tape, patch_features(tape, model, set.inputs[i]), hw, &hb);
      const ad::Tensor& l = logits.value();
      for (std::size_t r = 0; r < l.rows(); ++r) {
        const std::size_t pred = l.at(r, 1) > l.at(r, 0) ? 1 : 0;
        correct += pred == set.labels[i][r];
        ++total;
      }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
  };

  ProbeReport report;
  report.initial_test_accuracy = accuracy(test);
  OptimizerConfig oc;
  oc.base_lr = spec.lr;
  oc.beta2 = 0.999;
  oc.weight_decay = spec.weight_decay;
  oc.batch_size = spec.batch_size;
  Optimizer opt(oc);
  ScheduleConfig sched;
  sched.warmup_epochs = 0;
  sched.total_epochs = spec.epochs;
  std::vector<ad::Param*> params = model.params().all();
  for (ad::Param* p : head.all()) params.push_back(p);
  const std::size_t n = train.inputs.size();
  const std::size_t steps_per_epoch = (n + spec.batch_size - 1) / spec.batch_size;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, "probe-shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      model.params().zero_grad();
      head.zero_grad();
      const std::size_t lo = s * spec.batch_size, hi = std::min(n, lo + spec.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t i = order[k];
        ad::Tape tape;
        Var logits = ad::linear(tape, patch_features(tape, model, train.inputs[i]), hw, &hb);
        Var loss = ad::cross_entropy_rows(logits, train.labels[i]);
        loss_sum += loss.value().item() * inv;
        tape.backward(ad::scale(loss, inv));
      }
      opt.step(params, scheduled_lr(sched, epoch * steps_per_epoch + s, steps_per_epoch, spec.lr));
      ++report.steps;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(steps_per_epoch));
  }
  report.train_accuracy = accuracy(train);
  report.test_accuracy = accuracy(test);
  return report;
}

}  // namespace padmae::train
