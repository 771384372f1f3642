// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "padmae/autodiff/gradcheck.hpp"
#include "padmae/core/hash.hpp"
#include "padmae/mae/pretrain.hpp"
#include "test_util.hpp"

namespace padmae::mae {
namespace {

using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Image random_image(std::size_t size, Rng& rng) {
  Image img(size, size);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

vit::ViTConfig tiny() {
  vit::ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.depth = 2;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.decoder_dim = 8;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.adapter.middle_dim = 3;
  return c;
}

std::string hash_params(const ad::ParamStore& store, bool (*select)(const std::string&)) {
  std::string bytes;
  for (const Param* p : store.all()) {
    if (!select(p->name)) continue;
    bytes += p->name;
    const auto& d = p->value.storage();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return sha256_hex(bytes);
}

bool is_backbone(const std::string& n) {
  return n.starts_with("encoder.") && !train::is_adapter_param(n);
}

TEST(Masking, PaperRatioCounts) {
  Rng rng(1);
  MaskSpec m = random_masking(196, 0.75, rng);
  EXPECT_EQ(m.num_visible, 49u);
  EXPECT_EQ(m.num_masked(), 147u);
  std::size_t masked = 0;
  for (auto b : m.binary_mask) masked += b;
  EXPECT_EQ(masked, 147u);
  std::vector<std::size_t> sorted = m.permutation;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Masking, ZeroRatioAllVisible) {
  Rng rng(2);
  MaskSpec m = random_masking(16, 0.0, rng);
  EXPECT_EQ(m.num_visible, 16u);
  EXPECT_EQ(m.num_masked(), 0u);
}

TEST(Masking, RejectsRatioOne) {
  Rng rng(3);
  EXPECT_THROW(random_masking(16, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(random_masking(16, -0.1, rng), std::invalid_argument);
}

TEST(Masking, SeedReplay) {
  Rng a(4), b(4);
  EXPECT_EQ(random_masking(196, 0.75, a), random_masking(196, 0.75, b));
}

TEST(Masking, MaskedFractionAndPerPositionRate) {
  Rng rng(5);
  const int trials = 10000;
  std::vector<double> per_pos(196, 0.0);
  double total = 0.0;
  for (int i = 0; i < trials; ++i) {
    MaskSpec m = random_masking(196, 0.75, rng);
    for (std::size_t k = 0; k < 196; ++k) per_pos[k] += m.binary_mask[k];
    total += static_cast<double>(m.num_masked()) / 196.0;
  }
  EXPECT_NEAR(total / trials, 0.75, 0.005);
  for (double c : per_pos) EXPECT_NEAR(c / trials, 0.75, 0.03);
}

TEST(Targets, ConstantPatchIsZero) {
  Image img(8, 8, 3, 0.3);
  Tensor t = normalize_patch_targets(img, 4);
  for (double v : t.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Targets, MeanZeroVarianceOne) {
  Rng rng(6);
  Tensor t = normalize_patch_targets(random_image(8, rng), 4);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) mean += t.at(r, c);
    mean /= static_cast<double>(t.cols());
    for (std::size_t c = 0; c < t.cols(); ++c) sq += (t.at(r, c) - mean) * (t.at(r, c) - mean);
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(sq / static_cast<double>(t.cols()), 1.0, 1e-3);
  }
}

TEST(Targets, TwoByTwoPatchHandCase) {
  Image img(2, 2);
  const double vals[12] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.25};
  std::copy(vals, vals + 12, img.data.begin());
  Tensor t = normalize_patch_targets(img, 2);
  ASSERT_EQ(t.shape(), (ad::Shape{1, 12}));
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= 12.0;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= 12.0;
  for (std::size_t i = 0; i < 12; ++i)
    EXPECT_NEAR(t[i], (vals[i] - mean) / std::sqrt(var + 1e-6), 1e-15);
}

TEST(Loss, ZeroWhenMaskedPredictionsMatch) {
  Rng rng(7);
  Tensor targets = testing::random_tensor(4, 6, rng);
  MaskSpec m = random_masking(4, 0.5, rng);
  Tape tape;
  Tensor pred = targets;
  for (std::size_t v : m.visible_indices())
    for (std::size_t c = 0; c < 6; ++c) pred.at(v, c) = 42.0;
  EXPECT_EQ(mae_loss(tape.constant(pred), targets, m).value().item(), 0.0);
}

TEST(Loss, VisiblePerturbationIsBitInvariantAndHasZeroGradient) {
  Rng rng(8);
  Tensor targets = testing::random_tensor(16, 12, rng);
  MaskSpec m = random_masking(16, 0.75, rng);
  ad::ParamStore store;
  Param& p = store.add("pred", testing::random_tensor(16, 12, rng));
  Tape t1;
  const double base = mae_loss(t1.param(p), targets, m).value().item();
  t1.backward(mae_loss(t1.param(p), targets, m));
  for (std::size_t v : m.visible_indices())
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(p.grad.at(v, c), 0.0);
  for (std::size_t v : m.visible_indices())
    for (std::size_t c = 0; c < 12; ++c) p.value.at(v, c) += rng.uniform(-10, 10);
  Tape t2;
  EXPECT_EQ(mae_loss(t2.param(p), targets, m).value().item(), base);
}

TEST(Loss, FourPatchScalarOracle) {
  Rng rng(9);
  Tensor targets = testing::random_tensor(4, 3, rng);
  Tensor pred = testing::random_tensor(4, 3, rng);
  MaskSpec m = random_masking(4, 0.5, rng);
  Tape tape;
  const double got = mae_loss(tape.constant(pred), targets, m).value().item();
  double sum = 0.0;
  for (std::size_t k : m.masked_indices()) {
    double se = 0.0;
    for (std::size_t c = 0; c < 3; ++c) se += std::pow(pred.at(k, c) - targets.at(k, c), 2);
    sum += se / 3.0;
  }
  EXPECT_NEAR(got, sum / 2.0, 1e-15);
}

TEST(Loss, NoMaskedPatchesRejected) {
  Rng rng(10);
  MaskSpec m = random_masking(4, 0.0, rng);
  Tape tape;
  EXPECT_THROW(mae_loss(tape.constant(Tensor({4, 3})), Tensor({4, 3}), m), std::invalid_argument);
}

PretrainBatch make_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PretrainBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.images.push_back(random_image(8, rng));
    b.masks.push_back(random_masking(4, 0.5, rng));
    b.provenance.push_back("img" + std::to_string(i));
  }
  return b;
}

TEST(PretrainStep, PadPolicyKeepsBackboneHash) {
  vit::MaskedAutoencoder model(tiny(), 11);
  train::PolicyOptions po;
  po.depth = 2;
  po.total_epochs = 10;
  auto policy = train::make_policy(train::Paradigm::pad, model.params(), po);
  train::OptimizerConfig oc;
  oc.base_lr = 1e-2;
  train::Optimizer opt(oc);
  const std::string before = hash_params(model.params(), is_backbone);
  std::map<std::string, Tensor> dec_before;
  for (const Param* p : model.params().all("decoder.")) dec_before[p->name] = p->value;
  for (std::size_t s = 0; s < 10; ++s) pretrain_step(make_batch(2, s), model, opt, policy, 0, 1e-2);
  EXPECT_EQ(hash_params(model.params(), is_backbone), before);
  bool decoder_moved = false;
  for (const Param* p : model.params().all("decoder."))
    decoder_moved |= !(p->value == dec_before[p->name]);
  EXPECT_TRUE(decoder_moved);
  for (const auto& [name, _] : opt.moments()) EXPECT_FALSE(is_backbone(name)) << name;
}

TEST(PretrainStep, FrozenPolicyChangesNothing) {
  vit::MaskedAutoencoder model(tiny(), 12);
  auto policy = train::frozen_policy(model.params());
  train::Optimizer opt({});
  auto all = [](const std::string&) { return true; };
  const std::string before = hash_params(model.params(), all);
  const double loss = pretrain_step(make_batch(2, 1), model, opt, policy, 0, 1e-2);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(hash_params(model.params(), all), before);
  EXPECT_TRUE(opt.moments().empty());
}

TEST(PretrainStep, SgdStepMatchesFiniteDifferenceDescent) {
  vit::MaskedAutoencoder model(tiny(), 13);
  Rng rng(14);
  for (Param* p : model.params().all())
    for (double& v : p->value.storage()) v += rng.uniform(-0.1, 0.1);
  PretrainBatch batch = make_batch(2, 15);
  train::PolicyOptions po;
  po.depth = 2;
  auto policy = train::make_policy(train::Paradigm::full_from_init, model.params(), po);
  policy.apply(model.params(), 0);

  // Oracle gradient from central differences of the batch loss.
  std::vector<Param*> params = model.params().all();
  std::map<std::string, Tensor> expected;
  const double lr = 1e-3, h = 1e-5;
  for (Param* p : params) {
    Tensor next = p->value;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double w = p->value[i];
      p->value[i] = w + h;
      const double up = evaluate_loss(batch, model);
      p->value[i] = w - h;
      const double down = evaluate_loss(batch, model);
      p->value[i] = w;
      next[i] = w - lr * (up - down) / (2 * h);
    }
    expected[p->name] = next;
  }
  train::OptimizerConfig oc;
  oc.kind = train::OptimizerKind::sgd;
  train::Optimizer opt(oc);
  pretrain_step(batch, model, opt, policy, 0, lr);
  double worst = 0.0;
  for (Param* p : params) worst = std::max(worst, ad::max_abs_difference(p->value, expected[p->name]));
  EXPECT_LT(worst, 1e-10);
}

TEST(PretrainStep, NonFiniteLossNamesImage) {
  vit::MaskedAutoencoder model(tiny(), 16);
  PretrainBatch batch = make_batch(2, 17);
  batch.images[1].data[0] = std::nan("");
  auto policy = train::frozen_policy(model.params());
  train::Optimizer opt({});
  try {
    pretrain_step(batch, model, opt, policy, 0, 1e-3);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("img1"), std::string::npos);
  }
}

TEST(PretrainStep, FullMaeLossGradientCheck) {
  vit::MaskedAutoencoder model(tiny(), 18);
  Rng rng(19);
  for (Param* p : model.params().all())
    for (double& v : p->value.storage()) v += rng.uniform(-0.2, 0.2);
  Image img = random_image(8, rng);
  MaskSpec m = random_masking(4, 0.5, rng);
  Tensor targets = normalize_patch_targets(img, 4);
  std::vector<Param*> ps = model.params().all();
  auto rep = ad::finite_difference_check(ps, [&](Tape& t) {
    vit::EncoderOptions o;
    o.mask = &m;
    auto enc = model.encode(t, img, o);
    return mae_loss(model.decode(t, enc, m), targets, m);
  });
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param << "[" << rep.worst_index << "]";
}

TEST(PretrainStep, ConstantImageLossCollapses) {
  vit::MaskedAutoencoder model(tiny(), 20);
  PretrainBatch batch;
  Image img(8, 8, 3, 0.5);
  Rng rng(21);
  for (int i = 0; i < 1; ++i) {
    batch.images.push_back(img);
    batch.masks.push_back(random_masking(4, 0.75, rng));
  }
  // Constant patches normalize to zero targets; make the head start away from them.
  for (double& v : model.params().get("decoder.head.bias").value.storage()) v = 0.5;
  train::PolicyOptions po;
  po.depth = 2;
  auto policy = train::make_policy(train::Paradigm::from_scratch, model.params(), po);
  train::OptimizerConfig oc;
  oc.weight_decay = 0.0;
  train::Optimizer opt(oc);
  const double initial = evaluate_loss(batch, model);
  double last = initial;
  for (int s = 0; s < 200; ++s) last = pretrain_step(batch, model, opt, policy, 0, 1e-2);
  EXPECT_LT(evaluate_loss(batch, model), 0.1 * initial);
  EXPECT_LT(last, initial);
}

}  // namespace
}  // namespace padmae::mae
