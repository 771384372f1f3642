// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "padmae/autodiff/tape.hpp"

// Differentiable primitives. All operands are read as rank-2 (rows x cols).
// Binary elementwise ops accept a second operand that is either the same
// shape, a 1 x cols row, a rows x 1 column or a 1 x 1 scalar; it is
// broadcast against the first operand.
namespace padmae::ad {

inline constexpr double kLayerNormEps = 1e-6;

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Selects rows by index; repeated indices are allowed and their gradients add.
Var gather_rows(Var a, std::span<const std::size_t> indices);

/// Per-row normalization with learnable gain and bias (each 1 x cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);

Var relu(Var a);
/// Exact erf formulation.
Var gelu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Mean over rows of -log softmax(logits)[r, labels[r]] as a 1 x 1 value.
Var cross_entropy_rows(Var logits, std::span<const std::size_t> labels);

Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var sum_all(Var a);
Var mean_all(Var a);
/// rows x 1 column of per-row means.
Var mean_rows(Var a);
/// rows x 1 column of per-row population variances.
Var variance_rows(Var a);

/// x W (+ b) with params bound as tape leaves.
Var linear(Tape& tape, Var x, Param& weight, Param* bias);
Var layer_norm(Tape& tape, Var x, Param& gain, Param& bias, double eps = kLayerNormEps);

// Value-only helpers shared with the scalar oracles in tests.
double gelu_value(double x);
double sigmoid_value(double x);

}  // namespace padmae::ad
