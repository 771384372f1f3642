// SPDX-License-Identifier: Apache-2.0
#include "padmae/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace padmae::ad {

namespace {

Tape& same_tape(const char* op, Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw std::logic_error(std::string(op) + ": operands live on different tapes");
  }
  return a.tape();
}

struct Broadcast {
  std::size_t rows, cols, b_rows, b_cols;

  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (b_rows == 1 ? 0 : r) * b_cols + (b_cols == 1 ? 0 : c);
  }
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  Broadcast bc{a.rows(), a.cols(), b.rows(), b.cols()};
  if ((bc.b_rows != bc.rows && bc.b_rows != 1) || (bc.b_cols != bc.cols && bc.b_cols != 1)) {
    throw ShapeError(op, a.shape(), b.shape());
  }
  return bc;
}

Tensor reduce_to(const Tensor& g, const Broadcast& bc, const Shape& b_shape) {
  Tensor out = Tensor::zeros(b_shape);
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) out[bc.b_index(r, c)] += g[r * bc.cols + c];
  }
  return out;
}

template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
  return a.tape().record(op, std::move(y), {a}, [a, deriv](const Tensor& g, Tape& t) {
    const Tensor& xv = t.value(a);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = g[i] * deriv(xv[i]);
    t.accumulate(a, gx);
  });
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Var matmul(Var a, Var b) {
  Tape& tape = same_tape("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  if (B.rows() != k) throw ShapeError("matmul", A.shape(), B.shape());
  Tensor C = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * m];
      double* crow = &C[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return tape.record("matmul", std::move(C), {a, b}, [a, b, n, k, m](const Tensor& g, Tape& t) {
    const Tensor& Av = t.value(a);
    const Tensor& Bv = t.value(b);
    if (t.requires_grad(a)) {
      // dA = g * B^T
      Tensor gA = Tensor::zeros(Av.shape());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * Bv[p * m + j];
          gA[i * k + p] = s;
        }
      }
      t.accumulate(a, gA);
    }
    if (t.requires_grad(b)) {
      // dB = A^T * g
      Tensor gB = Tensor::zeros(Bv.shape());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Av[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += av * g[i * m + j];
        }
      }
      t.accumulate(b, gB);
    }
  });
}

namespace {

template <int Sign>
Var add_like(const char* op, Var a, Var b) {
  Tape& tape = same_tape(op, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast bc = broadcast(op, A, B);
  Tensor C(A.shape());
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      const std::size_t i = r * bc.cols + c;
      C[i] = A[i] + Sign * B[bc.b_index(r, c)];
    }
  }
  return tape.record(op, std::move(C), {a, b}, [a, b, bc](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) {
      Tensor gb = reduce_to(g, bc, t.value(b).shape());
      if constexpr (Sign < 0) {
        for (double& v : gb.storage()) v = -v;
      }
      t.accumulate(b, gb);
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_like<1>("add", a, b); }
Var sub(Var a, Var b) { return add_like<-1>("sub", a, b); }

Var mul(Var a, Var b) {
  Tape& tape = same_tape("mul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast bc = broadcast("mul", A, B);
  Tensor C(A.shape());
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      const std::size_t i = r * bc.cols + c;
      C[i] = A[i] * B[bc.b_index(r, c)];
    }
  }
  return tape.record("mul", std::move(C), {a, b}, [a, b, bc](const Tensor& g, Tape& t) {
    const Tensor& Av = t.value(a);
    const Tensor& Bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor ga(Av.shape());
      for (std::size_t r = 0; r < bc.rows; ++r) {
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const std::size_t i = r * bc.cols + c;
          ga[i] = g[i] * Bv[bc.b_index(r, c)];
        }
      }
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor prod(Av.shape());
      for (std::size_t i = 0; i < Av.numel(); ++i) prod[i] = g[i] * Av[i];
      t.accumulate(b, reduce_to(prod, bc, Bv.shape()));
    }
  });
}

Var scale(Var a, double k) {
  const Tensor& A = a.value();
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) C[i] = k * A[i];
  return a.tape().record("scale", std::move(C), {a}, [a, k](const Tensor& g, Tape& t) {
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = k * g[i];
    t.accumulate(a, ga);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &parts[0].tape()) throw std::logic_error("concat_cols: mixed tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
    total += p.cols();
  }
  Tensor out = Tensor::zeros({rows, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&v[r * v.cols()], v.cols(), &out[r * total + offset]);
    }
    offset += v.cols();
  }
  return parts[0].tape().record("concat_cols", std::move(out), parts,
                                [parts, rows, total](const Tensor& g, Tape& t) {
                                  std::size_t off = 0;
                                  for (const Var& p : parts) {
                                    const std::size_t w = t.value(p).cols();
                                    if (t.requires_grad(p)) {
                                      Tensor gp = Tensor::zeros(t.value(p).shape());
                                      for (std::size_t r = 0; r < rows; ++r) {
                                        std::copy_n(&g[r * total + off], w, &gp[r * w]);
                                      }
                                      t.accumulate(p, gp);
                                    }
                                    off += w;
                                  }
                                });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts[0].cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &parts[0].tape()) throw std::logic_error("concat_rows: mixed tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * cols);
  for (const Var& p : parts) {
    const auto& s = p.value().storage();
    data.insert(data.end(), s.begin(), s.end());
  }
  return parts[0].tape().record(
      "concat_rows", Tensor({total, cols}, std::move(data)), parts,
      [parts, cols](const Tensor& g, Tape& t) {
        std::size_t off = 0;
        for (const Var& p : parts) {
          const std::size_t n = t.value(p).numel();
          if (t.requires_grad(p)) {
            std::vector<double> gp(g.storage().begin() + off, g.storage().begin() + off + n);
            t.accumulate(p, Tensor(t.value(p).shape(), std::move(gp)));
          }
          off += n;
        }
        (void)cols;
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& A = a.value();
  if (count == 0 || start + count > A.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(A.shape()));
  }
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor out = Tensor::zeros({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&A[r * cols + start], count, &out[r * count]);
  return a.tape().record("slice_cols", std::move(out), {a},
                         [a, start, count, rows, cols](const Tensor& g, Tape& t) {
                           Tensor ga = Tensor::zeros(t.value(a).shape());
                           for (std::size_t r = 0; r < rows; ++r) {
                             std::copy_n(&g[r * count], count, &ga[r * cols + start]);
                           }
                           t.accumulate(a, ga);
                         });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out = Tensor::zeros({idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " outside " +
                       shape_str(A.shape()));
    }
    std::copy_n(&A[idx[i] * cols], cols, &out[i * cols]);
  }
  return a.tape().record("gather_rows", std::move(out), {a},
                         [a, idx = std::move(idx), cols](const Tensor& g, Tape& t) {
                           Tensor ga = Tensor::zeros(t.value(a).shape());
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (std::size_t c = 0; c < cols; ++c) {
                               ga[idx[i] * cols + c] += g[i * cols + c];
                             }
                           }
                           t.accumulate(a, ga);
                         });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape("layer_norm", x, gain);
  same_tape("layer_norm", x, bias);
  const Tensor& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (gain.value().numel() != cols) throw ShapeError("layer_norm(gain)", X.shape(), gain.shape());
  if (bias.value().numel() != cols) throw ShapeError("layer_norm(bias)", X.shape(), bias.shape());
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor xhat(X.shape());
  std::vector<double> inv_std(rows);
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += X[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = X[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (X[i] - mean) * inv_std[r];
      Y[i] = xhat[i] * G[c] + B[c];
    }
  }
  return tape.record(
      "layer_norm", std::move(Y), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
       cols](const Tensor& g, Tape& t) {
        const Tensor& Gv = t.value(gain);
        if (t.requires_grad(x)) {
          Tensor gx(t.value(x).shape());
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              const double d = g[i] * Gv[c];
              mean_d += d;
              mean_dx += d * xhat[i];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              gx[i] = inv_std[r] * (g[i] * Gv[c] - mean_d - xhat[i] * mean_dx);
            }
          }
          t.accumulate(x, gx);
        }
        if (t.requires_grad(gain) || t.requires_grad(bias)) {
          Tensor gg = Tensor::zeros(Gv.shape());
          Tensor gb = Tensor::zeros(t.value(bias).shape());
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              gg[c] += g[i] * xhat[i];
              gb[c] += g[i];
            }
          }
          t.accumulate(gain, gg);
          t.accumulate(bias, gb);
        }
      });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return unary("gelu", a, gelu_value, [](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + v * pdf;
  });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, sigmoid_value, [](double v) {
    const double s = sigmoid_value(v);
    return s * (1.0 - s);
  });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor Y(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &A[r * cols];
    double* out = &Y[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= sum;
  }
  Tensor y_copy = Y;
  return a.tape().record("softmax_rows", std::move(Y), {a},
                         [a, y = std::move(y_copy), rows, cols](const Tensor& g, Tape& t) {
                           Tensor ga(y.shape());
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) {
                               dot += g[r * cols + c] * y[r * cols + c];
                             }
                             for (std::size_t c = 0; c < cols; ++c) {
                               const std::size_t i = r * cols + c;
                               ga[i] = y[i] * (g[i] - dot);
                             }
                           }
                           t.accumulate(a, ga);
                         });
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> labels) {
  const Tensor& A = logits.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  if (labels.size() != rows || rows == 0) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  Tensor P(A.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw ShapeError("cross_entropy_rows: label out of range");
    const double* in = &A[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(in[c] - mx);
    for (std::size_t c = 0; c < cols; ++c) P[r * cols + c] = std::exp(in[c] - mx) / sum;
    loss -= in[labels[r]] - mx - std::log(sum);
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return logits.tape().record(
      "cross_entropy_rows", Tensor::scalar(loss), {logits},
      [logits, p = std::move(P), y = std::move(y), rows, cols](const Tensor& g, Tape& t) {
        Tensor ga = p;
        for (std::size_t r = 0; r < rows; ++r) ga[r * cols + y[r]] -= 1.0;
        const double k = g[0] / static_cast<double>(rows);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= k;
        t.accumulate(logits, ga);
      });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor T = Tensor::zeros({cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) T[c * rows + r] = A[r * cols + c];
  }
  return a.tape().record("transpose", std::move(T), {a}, [a, rows, cols](const Tensor& g, Tape& t) {
    Tensor ga = Tensor::zeros(t.value(a).shape());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = g[c * rows + r];
    }
    t.accumulate(a, ga);
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [a](const Tensor& g, Tape& t) {
    t.accumulate(a, g.reshaped(t.value(a).shape()));
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  return a.tape().record("sum_all", Tensor::scalar(s), {a}, [a](const Tensor& g, Tape& t) {
    t.accumulate(a, Tensor(t.value(a).shape(), g.item()));
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().numel());
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  return a.tape().record("mean_all", Tensor::scalar(s / n), {a}, [a, n](const Tensor& g, Tape& t) {
    t.accumulate(a, Tensor(t.value(a).shape(), g.item() / n));
  });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor m = Tensor::zeros({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += A[r * cols + c];
    m[r] = s / static_cast<double>(cols);
  }
  return a.tape().record("mean_rows", std::move(m), {a}, [a, rows, cols](const Tensor& g, Tape& t) {
    Tensor ga = Tensor::zeros(t.value(a).shape());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = g[r] / static_cast<double>(cols);
    }
    t.accumulate(a, ga);
  });
}

Var variance_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  const double n = static_cast<double>(cols);
  Tensor v = Tensor::zeros({rows, 1});
  std::vector<double> means(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += A[r * cols + c];
    means[r] = s / n;
    double q = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = A[r * cols + c] - means[r];
      q += d * d;
    }
    v[r] = q / n;
  }
  return a.tape().record("variance_rows", std::move(v), {a},
                         [a, rows, cols, n, means = std::move(means)](const Tensor& g, Tape& t) {
                           const Tensor& Av = t.value(a);
                           Tensor ga = Tensor::zeros(Av.shape());
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < cols; ++c) {
                               const std::size_t i = r * cols + c;
                               ga[i] = g[r] * 2.0 * (Av[i] - means[r]) / n;
                             }
                           }
                           t.accumulate(a, ga);
                         });
}

Var linear(Tape& tape, Var x, Param& weight, Param* bias) {
  Var y = matmul(x, tape.param(weight));
  return bias ? add(y, tape.param(*bias)) : y;
}

Var layer_norm(Tape& tape, Var x, Param& gain, Param& bias, double eps) {
  return layer_norm(x, tape.param(gain), tape.param(bias), eps);
}

}  // namespace padmae::ad
