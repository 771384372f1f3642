// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "padmae/autodiff/gradcheck.hpp"
#include "padmae/autodiff/ops.hpp"
#include "test_util.hpp"

namespace padmae::ad {
namespace {

using testing::from_matrix;
using testing::random_tensor;
using testing::to_matrix;

TEST(Primitives, SigmoidOfZeroIsHalf) {
  Tape tape;
  Var y = sigmoid(tape.constant(Tensor::scalar(0.0)));
  EXPECT_EQ(y.value().item(), 0.5);
}

TEST(Primitives, LayerNormOfConstantTokenIsZero) {
  Tape tape;
  Var x = tape.constant(Tensor({2, 5}, 3.25));
  Var y = layer_norm(x, tape.constant(Tensor({1, 5}, 1.0)), tape.constant(Tensor({1, 5}, 0.0)));
  for (double v : y.value().storage()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(y.value().all_finite());
}

TEST(Primitives, MatmulMatchesScalarTripleLoop) {
  Rng rng(11);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
  Tape tape;
  Var c = matmul(tape.constant(a), tape.constant(b));
  EXPECT_LE(testing::max_rel(testing::ref_matmul(to_matrix(a), to_matrix(b)), c.value(), 1e-12),
            1e-12);
}

TEST(Primitives, ForwardValuesMatchScalarReferences) {
  Rng rng(5);
  Tensor x = random_tensor(6, 7, rng, -3.0, 3.0);
  Tensor g = random_tensor(1, 7, rng), b = random_tensor(1, 7, rng);
  Tape tape;
  Var vx = tape.constant(x);
  const auto mx = to_matrix(x);
  EXPECT_LE(testing::max_rel(testing::ref_map(mx, testing::ref_gelu), gelu(vx).value(), 1e-12),
            1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_map(mx, testing::ref_sigmoid), sigmoid(vx).value(), 1e-12),
            1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_map(mx, [](double v) { return v > 0 ? v : 0.0; }),
                             relu(vx).value(), 1e-12),
            1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_softmax_rows(mx), softmax_rows(vx).value(), 1e-12), 1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_transpose(mx), transpose(vx).value(), 1e-12), 1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_layer_norm(mx, testing::row_of(g), testing::row_of(b)),
                             layer_norm(vx, tape.constant(g), tape.constant(b)).value(), 1e-12),
            1e-12);
  EXPECT_LE(testing::max_rel(testing::ref_add_row(mx, testing::row_of(b)),
                             add(vx, tape.constant(b)).value(), 1e-12),
            1e-12);
  // Softmax rows sum to one.
  Tensor s = softmax_rows(vx).value();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) sum += s.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Primitives, ShapeMismatchNamesOpAndShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({3, 4}));
  Var b = tape.constant(Tensor({3, 4}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[3x4]"), std::string::npos);
  }
  EXPECT_THROW(add(a, tape.constant(Tensor({2, 4}))), ShapeError);
  EXPECT_THROW(concat_cols({a, tape.constant(Tensor({2, 1}))}), ShapeError);
}

TEST(Forward, CrossEntropyValues) {
  Tape tape;
  // Uniform logits: -log(1/4) whatever the label.
  std::vector<std::size_t> y{0, 3};
  EXPECT_NEAR(cross_entropy_rows(tape.constant(Tensor({2, 4})), y).value()[0], std::log(4.0), 1e-15);
  Tensor l({1, 2}, std::vector<double>{2.0, 0.0});
  std::vector<std::size_t> one{1};
  EXPECT_NEAR(cross_entropy_rows(tape.constant(l), one).value()[0], std::log(1.0 + std::exp(2.0)),
              1e-14);
  std::vector<std::size_t> bad{2};
  EXPECT_THROW(cross_entropy_rows(tape.constant(l), bad), ShapeError);
}

// Each case: a builder from one or two params to an output Var. The loss is
// sum(output * R) with a fixed random R so that every output entry matters.
struct PrimitiveCase {
  std::string name;
  std::function<Var(Tape&, std::vector<Param*>&)> build;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  double lo = -1.0, hi = 1.0;
};

Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(y.rows(), y.cols(), rng);
  return sum_all(mul(y, tape.constant(w.reshaped(y.shape()))));
}

TEST(Primitives, GradientsMatchCentralDifferencesOnRandomShapes) {
  Rng shape_rng(2024);
  auto dim = [&](std::size_t hi) { return 1 + shape_rng.uniform_index(hi); };
  for (int trial = 0; trial < 4; ++trial) {
    // The first trial pins the largest shape.
    const std::size_t r = trial == 0 ? 64 : dim(24), c = trial == 0 ? 64 : dim(24);
    const std::size_t k = dim(6);
    std::vector<PrimitiveCase> cases = {
        {"matmul", [](Tape& t, auto& p) { return matmul(t.param(*p[0]), t.param(*p[1])); },
         {{r, k}, {k, c}}},
        {"add_row", [](Tape& t, auto& p) { return add(t.param(*p[0]), t.param(*p[1])); },
         {{r, c}, {1, c}}},
        {"sub_col", [](Tape& t, auto& p) { return sub(t.param(*p[0]), t.param(*p[1])); },
         {{r, c}, {r, 1}}},
        {"mul_col", [](Tape& t, auto& p) { return mul(t.param(*p[0]), t.param(*p[1])); },
         {{r, c}, {r, 1}}},
        {"mul_same", [](Tape& t, auto& p) { return mul(t.param(*p[0]), t.param(*p[1])); },
         {{r, c}, {r, c}}},
        {"mul_scalar", [](Tape& t, auto& p) { return mul(t.param(*p[0]), t.param(*p[1])); },
         {{r, c}, {1, 1}}},
        {"scale", [](Tape& t, auto& p) { return scale(t.param(*p[0]), -1.7); }, {{r, c}}},
        {"concat_cols",
         [](Tape& t, auto& p) { return concat_cols({t.param(*p[0]), t.param(*p[1])}); },
         {{r, c}, {r, k}}},
        {"concat_rows",
         [](Tape& t, auto& p) { return concat_rows({t.param(*p[0]), t.param(*p[1])}); },
         {{r, c}, {k, c}}},
        {"slice_cols",
         [](Tape& t, auto& p) {
           Var x = t.param(*p[0]);
           return slice_cols(x, x.cols() / 2, x.cols() - x.cols() / 2);
         },
         {{r, c}}},
        {"gather_rows",
         [](Tape& t, auto& p) {
           Var x = t.param(*p[0]);
           std::vector<std::size_t> idx{x.rows() - 1, 0, x.rows() - 1};
           return gather_rows(x, idx);
         },
         {{r, c}}},
        {"layer_norm",
         [](Tape& t, auto& p) {
           return layer_norm(t.param(*p[0]), t.param(*p[1]), t.param(*p[2]));
         },
         {{r, c + 1}, {1, c + 1}, {1, c + 1}}},
        {"relu", [](Tape& t, auto& p) { return relu(t.param(*p[0])); }, {{r, c}}},
        {"gelu", [](Tape& t, auto& p) { return gelu(t.param(*p[0])); }, {{r, c}}, -3.0, 3.0},
        {"sigmoid", [](Tape& t, auto& p) { return sigmoid(t.param(*p[0])); }, {{r, c}}, -4.0, 4.0},
        {"softmax_rows", [](Tape& t, auto& p) { return softmax_rows(t.param(*p[0])); }, {{r, c}},
         -3.0, 3.0},
        {"cross_entropy_rows",
         [](Tape& t, auto& p) {
           Var x = t.param(*p[0]);
           std::vector<std::size_t> y(x.rows());
           for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i * 7) % x.cols();
           return cross_entropy_rows(x, y);
         },
         {{r, c}}, -3.0, 3.0},
        {"transpose", [](Tape& t, auto& p) { return transpose(t.param(*p[0])); }, {{r, c}}},
        {"reshape",
         [](Tape& t, auto& p) {
           Var x = t.param(*p[0]);
           return reshape(x, {x.cols(), x.rows()});
         },
         {{r, c}}},
        {"mean_all", [](Tape& t, auto& p) { return mean_all(t.param(*p[0])); }, {{r, c}}},
        {"mean_rows", [](Tape& t, auto& p) { return mean_rows(t.param(*p[0])); }, {{r, c}}},
        {"variance_rows", [](Tape& t, auto& p) { return variance_rows(t.param(*p[0])); },
         {{r, c}}},
    };
    for (auto& pc : cases) {
      Rng rng(derive_seed(77, pc.name, static_cast<std::uint64_t>(trial)));
      ParamStore store;
      std::vector<Param*> ps;
      for (std::size_t i = 0; i < pc.shapes.size(); ++i) {
        auto [pr, pcols] = pc.shapes[i];
        ps.push_back(&store.add(pc.name + "." + std::to_string(i),
                                random_tensor(pr, pcols, rng, pc.lo, pc.hi)));
      }
      auto loss = [&](Tape& t) { return weighted_sum(t, pc.build(t, ps), 99); };
      GradCheckReport rep = finite_difference_check(ps, loss);
      EXPECT_EQ(rep.checked, store.numel()) << pc.name;
      EXPECT_LT(rep.max_rel_error, 1e-6)
          << pc.name << " trial " << trial << " worst " << rep.worst_param << "["
          << rep.worst_index << "]";
    }
  }
}

TEST(Tape, FanOutGradientsAddUp) {
  Rng rng(3);
  ParamStore store;
  Param& x = store.add("x", random_tensor(4, 5, rng));
  Tensor w1 = random_tensor(5, 3, rng);
  auto branch1 = [&](Tape& t, Var v) { return sum_all(gelu(matmul(v, t.constant(w1)))); };
  auto branch2 = [&](Tape&, Var v) { return mean_all(mul(sigmoid(v), v)); };

  auto grad_of = [&](auto&& fn) {
    x.zero_grad();
    Tape t;
    Var v = t.param(x);
    t.backward(fn(t, v));
    return x.grad;
  };
  Tensor g1 = grad_of(branch1);
  Tensor g2 = grad_of(branch2);
  Tensor both = grad_of([&](Tape& t, Var v) { return add(branch1(t, v), branch2(t, v)); });
  Tensor sum = g1;
  sum.add_inplace(g2);
  EXPECT_LE(max_relative_difference(both, sum, 1e-12), 1e-12);
}

TEST(Tape, BackwardVisitsInReverseExecutionOrder) {
  Tape tape;
  ParamStore store;
  Param& p = store.add("p", Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var a = tape.param(p);
  Var b = sigmoid(a);
  Var c = mul(a, b);
  Var d = sum_all(c);
  tape.backward(d);
  const auto& order = tape.last_backward_order();
  ASSERT_EQ(order.size(), 4u);
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_LT(order[i], order[i - 1]);
  EXPECT_EQ(tape.op_name(order.front()), "sum_all");
}

TEST(Tape, DeterministicForwardAndGradients) {
  auto run = [] {
    Rng rng(42);
    ParamStore store;
    Param& w = store.add("w", random_tensor(6, 6, rng));
    Tensor x = random_tensor(5, 6, rng);
    Tape tape;
    Var y = softmax_rows(matmul(tape.constant(x), tape.param(w)));
    Var l = sum_all(mul(y, y));
    tape.backward(l);
    return std::make_pair(l.value(), w.grad);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Tape, FrozenParamReceivesNoGradient) {
  ParamStore store;
  Param& w = store.add("w", Tensor::matrix(1, 2, {0.3, -0.2}));
  w.trainable = false;
  Tape tape;
  tape.backward(sum_all(sigmoid(tape.param(w))));
  EXPECT_EQ(w.grad, Tensor::zeros({1, 2}));
}

TEST(GradCheck, SumSigmoidWx) {
  Rng rng(8);
  ParamStore store;
  Param& w = store.add("W", random_tensor(4, 4, rng));
  Tensor x = random_tensor(4, 4, rng);
  std::vector<Param*> ps{&w};
  auto rep = finite_difference_check(
      ps, [&](Tape& t) { return sum_all(sigmoid(matmul(t.param(w), t.constant(x)))); });
  EXPECT_LT(rep.max_rel_error, 1e-6);
  EXPECT_EQ(rep.checked, 16u);
  EXPECT_EQ(rep.worst_param, "W");
}

TEST(GradCheck, IndependentParamHasZeroGradients) {
  Rng rng(9);
  ParamStore store;
  Param& used = store.add("used", random_tensor(2, 2, rng));
  Param& unused = store.add("unused", random_tensor(2, 2, rng));
  std::vector<Param*> ps{&used, &unused};
  auto rep = finite_difference_check(ps, [&](Tape& t) { return sum_all(gelu(t.param(used))); });
  for (const auto& e : rep.entries) {
    if (e.param == "unused") {
      EXPECT_EQ(e.analytic, 0.0);
      EXPECT_EQ(e.numeric, 0.0);
    }
  }
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheck, RefusesNonDeterministicLoss) {
  ParamStore store;
  Param& w = store.add("w", Tensor::scalar(1.0));
  std::vector<Param*> ps{&w};
  int calls = 0;
  EXPECT_THROW(finite_difference_check(ps,
                                       [&](Tape& t) {
                                         ++calls;
                                         return scale(t.param(w), static_cast<double>(calls));
                                       }),
               std::runtime_error);
}

}  // namespace
}  // namespace padmae::ad
