// Copyright 2026  The wafersemi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "wafersemi/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace wafersemi::ops {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

using internal::Node;

void Accumulate(Node* node, std::span<const double> delta) {
  if (node->requires_grad) node->AccumulateGrad(delta);
}

void RequireRank(const Variable& x, std::size_t rank, const char* op) {
  RequireArg(x.shape().size() == rank,
             std::string(op) + ": expected rank " + std::to_string(rank) +
                 " operand, got " + ShapeToString(x.shape()));
}

void RequireSameShape(const Variable& x, const Variable& y, const char* op) {
  RequireArg(x.shape() == y.shape(), std::string(op) + ": shape mismatch " +
                                         ShapeToString(x.shape()) + " vs " +
                                         ShapeToString(y.shape()));
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, oh, ow, stride, padding;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

// cols has shape [C*kH*kW, N*oH*oW].
void Im2Col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t np = g.n * g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((ci * g.kh + ki) * g.kw + kj) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* plane = x + (n * g.c + ci) * g.h * g.w;
          double* out = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) -
                            static_cast<long>(g.padding);
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) -
                              static_cast<long>(g.padding);
              const bool inside = iy >= 0 && iy < static_cast<long>(g.h) &&
                                  ix >= 0 && ix < static_cast<long>(g.w);
              out[oy * g.ow + ox] = inside ? plane[iy * g.w + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void Col2Im(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t np = g.n * g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((ci * g.kh + ki) * g.kw + kj) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* plane = dx + (n * g.c + ci) * g.h * g.w;
          const double* in = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) -
                            static_cast<long>(g.padding);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) -
                              static_cast<long>(g.padding);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              plane[iy * g.w + ix] += in[oy * g.ow + ox];
            }
          }
        }
      }
    }
  }
}

template <typename Fn, typename Deriv>
Variable Elementwise(const Variable& x, Fn fn, Deriv deriv) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  Node* px = x.node();
  // The closure reads the output through a copy, so it stays valid however
  // long the tape lives.
  auto result = std::make_shared<Tensor>(out);
  return Variable::FromOp(
      std::move(out), {x}, [px, result, deriv](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        const Tensor& in = px->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] += g[i] * deriv(in[i], (*result)[i]);
        }
      });
}

}  // namespace

std::size_t WindowOutputSize(std::size_t in, std::size_t kernel,
                             std::size_t stride, std::size_t padding) {
  RequireArg(stride > 0, "stride must be positive");
  RequireArg(kernel > 0, "kernel size must be positive");
  const std::size_t padded = in + 2 * padding;
  RequireArg(padded >= kernel, "window of size " + std::to_string(kernel) +
                                   " exceeds padded extent " +
                                   std::to_string(padded));
  RequireArg((padded - kernel) % stride == 0,
             "output size (" + std::to_string(in) + " + 2*" +
                 std::to_string(padding) + " - " + std::to_string(kernel) +
                 ")/" + std::to_string(stride) + " + 1 is not an integer");
  return (padded - kernel) / stride + 1;
}

Variable Conv2d(const Variable& input, const Variable& kernel,
                std::size_t stride, std::size_t padding) {
  RequireRank(input, 4, "conv2d input");
  RequireRank(kernel, 4, "conv2d kernel");
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  RequireArg(xs[1] == ks[1], "conv2d: input has " + std::to_string(xs[1]) +
                                 " channels but kernel expects " +
                                 std::to_string(ks[1]));
  ConvGeometry g{};
  g.n = xs[0];
  g.c = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.f = ks[0];
  g.kh = ks[2];
  g.kw = ks[3];
  g.stride = stride;
  g.padding = padding;
  g.oh = WindowOutputSize(g.h, g.kh, stride, padding);
  g.ow = WindowOutputSize(g.w, g.kw, stride, padding);

  const std::size_t np = g.n * g.positions();
  auto cols = std::make_shared<std::vector<double>>(g.patch() * np);
  Im2Col(g, input.value().data().data(), cols->data());

  ConstMatrixMap w(kernel.value().data().data(), g.f, g.patch());
  ConstMatrixMap col_mat(cols->data(), g.patch(), np);
  RowMatrix y = w * col_mat;

  Tensor out({g.n, g.f, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t f = 0; f < g.f; ++f) {
      const double* src = y.data() + f * np + n * g.positions();
      std::copy(src, src + g.positions(),
                out.data().data() + (n * g.f + f) * g.positions());
    }
  }

  Node* px = input.node();
  Node* pk = kernel.node();
  return Variable::FromOp(
      std::move(out), {input, kernel}, [g, px, pk, cols](const Tensor& grad) {
        const std::size_t np = g.n * g.positions();
        RowMatrix dy(g.f, np);
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t f = 0; f < g.f; ++f) {
            const double* src =
                grad.data().data() + (n * g.f + f) * g.positions();
            std::copy(src, src + g.positions(),
                      dy.data() + f * np + n * g.positions());
          }
        }
        if (pk->requires_grad) {
          ConstMatrixMap col_mat(cols->data(), g.patch(), np);
          MatrixMap dk(pk->MutableGrad(), g.f, g.patch());
          dk.noalias() += dy * col_mat.transpose();
        }
        if (px->requires_grad) {
          ConstMatrixMap w(pk->value.data().data(), g.f, g.patch());
          RowMatrix dcols = w.transpose() * dy;
          Col2Im(g, dcols.data(), px->MutableGrad());
        }
      });
}

Variable AddChannelBias(const Variable& x, const Variable& bias) {
  const Shape& xs = x.shape();
  const Shape& bs = bias.shape();
  RequireArg(xs.size() >= 2, "add_channel_bias: input must be at least [N,C]");
  const std::size_t n = xs[0];
  const std::size_t c = xs[1];
  const bool per_sample = bs.size() == 2;
  RequireArg((bs.size() == 1 && bs[0] == c) ||
                 (per_sample && bs[0] == n && bs[1] == c),
             "add_channel_bias: bias shape " + ShapeToString(bs) +
                 " incompatible with input " + ShapeToString(xs));
  const std::size_t inner = x.value().size() / (n * c);

  Tensor out = x.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = per_sample ? b[i * c + ch] : b[ch];
      double* dst = out.data().data() + (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) dst[k] += v;
    }
  }
  Node* px = x.node();
  Node* pb = bias.node();
  return Variable::FromOp(
      std::move(out), {x, bias},
      [px, pb, n, c, inner, per_sample](const Tensor& g) {
        Accumulate(px, g.data());
        if (!pb->requires_grad) return;
        double* db = pb->MutableGrad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = g.data().data() + (i * c + ch) * inner;
            double s = 0.0;
            for (std::size_t k = 0; k < inner; ++k) s += src[k];
            db[per_sample ? i * c + ch : ch] += s;
          }
        }
      });
}

Variable Relu(const Variable& x) {
  return Elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Variable Sigmoid(const Variable& x) {
  return Elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Variable Exp(const Variable& x) {
  return Elementwise(
      x, [](double v) { return std::exp(v); },
      [](double, double out) { return out; });
}

Variable Add(const Variable& x, const Variable& y) {
  RequireSameShape(x, y, "add");
  Tensor out = x.value();
  const Tensor& yv = y.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i];
  Node* px = x.node();
  Node* py = y.node();
  return Variable::FromOp(std::move(out), {x, y}, [px, py](const Tensor& g) {
    Accumulate(px, g.data());
    Accumulate(py, g.data());
  });
}

Variable Sub(const Variable& x, const Variable& y) {
  RequireSameShape(x, y, "sub");
  Tensor out = x.value();
  const Tensor& yv = y.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= yv[i];
  Node* px = x.node();
  Node* py = y.node();
  return Variable::FromOp(std::move(out), {x, y}, [px, py](const Tensor& g) {
    Accumulate(px, g.data());
    if (!py->requires_grad) return;
    double* dy = py->MutableGrad();
    for (std::size_t i = 0; i < g.size(); ++i) dy[i] -= g[i];
  });
}

Variable Mul(const Variable& x, const Variable& y) {
  RequireSameShape(x, y, "mul");
  Tensor out = x.value();
  const Tensor& yv = y.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= yv[i];
  Node* px = x.node();
  Node* py = y.node();
  return Variable::FromOp(std::move(out), {x, y}, [px, py](const Tensor& g) {
    // Both updates read the operands' values, never their grads, so the
    // x*x case accumulates 2x correctly.
    if (px->requires_grad) {
      double* dx = px->MutableGrad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * py->value[i];
    }
    if (py->requires_grad) {
      double* dy = py->MutableGrad();
      for (std::size_t i = 0; i < g.size(); ++i) dy[i] += g[i] * px->value[i];
    }
  });
}

Variable Scale(const Variable& x, double c) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= c;
  Node* px = x.node();
  return Variable::FromOp(std::move(out), {x}, [px, c](const Tensor& g) {
    if (!px->requires_grad) return;
    double* dx = px->MutableGrad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
  });
}

Variable AddScalar(const Variable& x, double c) {
  Tensor out = x.value();
  for (double& v : out.data()) v += c;
  Node* px = x.node();
  return Variable::FromOp(std::move(out), {x}, [px](const Tensor& g) {
    Accumulate(px, g.data());
  });
}

Variable Sum(const Variable& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  Node* px = x.node();
  return Variable::FromOp(Tensor::Scalar(s), {x}, [px](const Tensor& g) {
    if (!px->requires_grad) return;
    double* dx = px->MutableGrad();
    const double gv = g[0];
    for (std::size_t i = 0; i < px->value.size(); ++i) dx[i] += gv;
  });
}

Variable Mean(const Variable& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Variable MaxPool2d(const Variable& x, std::size_t kernel, std::size_t stride,
                   std::size_t padding) {
  RequireRank(x, 4, "max_pool2d");
  RequireArg(padding < kernel, "max_pool2d: padding must be below kernel");
  const Shape& xs = x.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t oh = WindowOutputSize(h, kernel, stride, padding);
  const std::size_t ow = WindowOutputSize(w, kernel, stride, padding);
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const Tensor& in = x.value();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const long iy = static_cast<long>(oy * stride + ki) -
                          static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const long ix = static_cast<long>(ox * stride + kj) -
                            static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = base + iy * w + ix;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  Node* px = x.node();
  return Variable::FromOp(std::move(out), {x}, [px, argmax](const Tensor& g) {
    if (!px->requires_grad) return;
    double* dx = px->MutableGrad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
  });
}

Variable GlobalMeanPool(const Variable& x) {
  RequireRank(x, 4, "global_mean_pool");
  const Shape& xs = x.shape();
  const std::size_t planes = xs[0] * xs[1];
  const std::size_t area = xs[2] * xs[3];
  Tensor out({xs[0], xs[1]});
  const Tensor& in = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < area; ++k) s += in[p * area + k];
    out[p] = s / static_cast<double>(area);
  }
  Node* px = x.node();
  return Variable::FromOp(
      std::move(out), {x}, [px, planes, area](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        const double inv = 1.0 / static_cast<double>(area);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t k = 0; k < area; ++k) dx[p * area + k] += g[p] * inv;
        }
      });
}

Variable Linear(const Variable& x, const Variable& weight,
                const Variable& bias) {
  RequireRank(x, 2, "linear input");
  RequireRank(weight, 2, "linear weight");
  RequireRank(bias, 1, "linear bias");
  const std::size_t n = x.shape()[0];
  const std::size_t in_dim = x.shape()[1];
  const std::size_t out_dim = weight.shape()[0];
  RequireArg(weight.shape()[1] == in_dim,
             "linear: input width " + std::to_string(in_dim) +
                 " does not match weight " + ShapeToString(weight.shape()));
  RequireArg(bias.shape()[0] == out_dim, "linear: bias length mismatch");

  ConstMatrixMap xm(x.value().data().data(), n, in_dim);
  ConstMatrixMap wm(weight.value().data().data(), out_dim, in_dim);
  Tensor out({n, out_dim});
  MatrixMap ym(out.data().data(), n, out_dim);
  ym.noalias() = xm * wm.transpose();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out_dim; ++j) ym(i, j) += b[j];
  }
  Node* px = x.node();
  Node* pw = weight.node();
  Node* pb = bias.node();
  return Variable::FromOp(
      std::move(out), {x, weight, bias},
      [px, pw, pb, n, in_dim, out_dim](const Tensor& g) {
        ConstMatrixMap gm(g.data().data(), n, out_dim);
        if (px->requires_grad) {
          ConstMatrixMap wm(pw->value.data().data(), out_dim, in_dim);
          MatrixMap dx(px->MutableGrad(), n, in_dim);
          dx.noalias() += gm * wm;
        }
        if (pw->requires_grad) {
          ConstMatrixMap xm(px->value.data().data(), n, in_dim);
          MatrixMap dw(pw->MutableGrad(), out_dim, in_dim);
          dw.noalias() += gm.transpose() * xm;
        }
        if (pb->requires_grad) {
          double* db = pb->MutableGrad();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < out_dim; ++j) db[j] += gm(i, j);
          }
        }
      });
}

namespace {

// Row-wise softmax of `rows` rows of width `k`.
void SoftmaxRows(const double* in, double* out, std::size_t rows,
                 std::size_t k) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* a = in + r * k;
    double* p = out + r * k;
    const double m = *std::max_element(a, a + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(a[j] - m);
      z += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= z;
  }
}

}  // namespace

Variable Softmax(const Variable& logits) {
  const Shape& s = logits.shape();
  RequireArg(s.size() == 1 || s.size() == 2,
             "softmax expects [K] or [N,K], got " + ShapeToString(s));
  const std::size_t k = s.back();
  const std::size_t rows = logits.value().size() / k;
  Tensor out(s);
  SoftmaxRows(logits.value().data().data(), out.data().data(), rows, k);
  auto probs = std::make_shared<Tensor>(out);
  Node* px = logits.node();
  return Variable::FromOp(
      std::move(out), {logits}, [px, probs, rows, k](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* p = probs->data().data() + r * k;
          const double* gr = g.data().data() + r * k;
          double dot = 0.0;
          for (std::size_t j = 0; j < k; ++j) dot += gr[j] * p[j];
          for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += p[j] * (gr[j] - dot);
        }
      });
}

Variable CrossEntropy(const Variable& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  RequireArg(s.size() == 1 || s.size() == 2,
             "cross_entropy expects [K] or [N,K], got " + ShapeToString(s));
  const std::size_t k = s.back();
  const std::size_t rows = logits.value().size() / k;
  RequireArg(labels.size() == rows,
             "cross_entropy: " + std::to_string(labels.size()) +
                 " labels for " + std::to_string(rows) + " rows");
  for (int label : labels) {
    RequireArg(label >= 0 && static_cast<std::size_t>(label) < k,
               "cross_entropy: label " + std::to_string(label) +
                   " out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(rows * k);
  SoftmaxRows(logits.value().data().data(), probs->data(), rows, k);
  const double* a = logits.value().data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * k;
    const double m = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    total += m + std::log(z) - row[labels[r]];
  }
  std::vector<int> owned(labels.begin(), labels.end());
  Node* px = logits.node();
  return Variable::FromOp(
      Tensor::Scalar(total / static_cast<double>(rows)), {logits},
      [px, probs, owned = std::move(owned), rows, k](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        const double scale = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            double d = (*probs)[r * k + j];
            if (static_cast<int>(j) == owned[r]) d -= 1.0;
            dx[r * k + j] += scale * d;
          }
        }
      });
}

Variable SpatialCrossEntropy(const Variable& logits,
                             std::span<const int> targets) {
  RequireRank(logits, 4, "spatial_cross_entropy");
  const Shape& s = logits.shape();
  const std::size_t n = s[0], k = s[1], area = s[2] * s[3];
  RequireArg(targets.size() == n * area,
             "spatial_cross_entropy: expected " + std::to_string(n * area) +
                 " targets, got " + std::to_string(targets.size()));
  for (int t : targets) {
    RequireArg(t >= 0 && static_cast<std::size_t>(t) < k,
               "spatial_cross_entropy: target out of range");
  }
  const double* a = logits.value().data().data();
  auto probs = std::make_shared<std::vector<double>>(n * k * area);
  double total = 0.0;
  std::vector<double> column(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < area; ++p) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        column[j] = a[(i * k + j) * area + p];
        m = std::max(m, column[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(column[j] - m);
      for (std::size_t j = 0; j < k; ++j) {
        (*probs)[(i * k + j) * area + p] = std::exp(column[j] - m) / z;
      }
      total += m + std::log(z) - column[targets[i * area + p]];
    }
  }
  std::vector<int> owned(targets.begin(), targets.end());
  Node* px = logits.node();
  return Variable::FromOp(
      Tensor::Scalar(total / static_cast<double>(n)), {logits},
      [px, probs, owned = std::move(owned), n, k, area](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        const double scale = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t p = 0; p < area; ++p) {
              const std::size_t idx = (i * k + j) * area + p;
              double d = (*probs)[idx];
              if (owned[i * area + p] == static_cast<int>(j)) d -= 1.0;
              dx[idx] += scale * d;
            }
          }
        }
      });
}

Variable Concat(std::span<const Variable> xs, std::size_t axis) {
  RequireArg(!xs.empty(), "concat: no operands");
  const Shape& first = xs[0].shape();
  RequireArg(axis < first.size(), "concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Variable& x : xs) {
    const Shape& s = x.shape();
    RequireArg(s.size() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      RequireArg(d == axis || s[d] == first[d],
                 "concat: shape mismatch " + ShapeToString(s) + " vs " +
                     ShapeToString(first));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  Tensor out(out_shape);
  const std::size_t out_row = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t chunk = extents[i] * inner;
    const double* src = xs[i].value().data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk,
                out.data().data() + o * out_row + offset);
    }
    offset += chunk;
  }
  std::vector<Node*> nodes;
  for (const Variable& x : xs) nodes.push_back(x.node());
  std::vector<Variable> parents(xs.begin(), xs.end());
  return Variable::FromOp(
      std::move(out), std::move(parents),
      [nodes, extents, outer, inner, out_row](const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          const std::size_t chunk = extents[i] * inner;
          if (nodes[i]->requires_grad) {
            double* dx = nodes[i]->MutableGrad();
            for (std::size_t o = 0; o < outer; ++o) {
              const double* src = g.data().data() + o * out_row + offset;
              for (std::size_t t = 0; t < chunk; ++t) dx[o * chunk + t] += src[t];
            }
          }
          offset += chunk;
        }
      });
}

Variable Reshape(const Variable& x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  Node* px = x.node();
  return Variable::FromOp(std::move(out), {x}, [px](const Tensor& g) {
    Accumulate(px, g.data());
  });
}

Variable UpsampleNearest(const Variable& x, std::size_t out_h,
                         std::size_t out_w) {
  RequireRank(x, 4, "upsample_nearest");
  RequireArg(out_h > 0 && out_w > 0, "upsample_nearest: empty output");
  const Shape& xs = x.shape();
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  auto source = std::make_shared<std::vector<std::size_t>>(out_h * out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      (*source)[oy * out_w + ox] = (oy * h / out_h) * w + ox * w / out_w;
    }
  }
  Tensor out({xs[0], xs[1], out_h, out_w});
  const Tensor& in = x.value();
  const std::size_t area = out_h * out_w;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t k = 0; k < area; ++k) {
      out[p * area + k] = in[p * h * w + (*source)[k]];
    }
  }
  Node* px = x.node();
  return Variable::FromOp(
      std::move(out), {x}, [px, source, planes, area, h, w](const Tensor& g) {
        if (!px->requires_grad) return;
        double* dx = px->MutableGrad();
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t k = 0; k < area; ++k) {
            dx[p * h * w + (*source)[k]] += g[p * area + k];
          }
        }
      });
}

}  // namespace wafersemi::ops
