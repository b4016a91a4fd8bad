#include "daft/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "daft/tape.hpp"

namespace daft::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what + ", got " + shape_str(a));
}

void check_finite(const char* op, const std::vector<float>& values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string(op) + ": non-finite output");
  }
}

Tensor finish(const char* op, Shape shape, std::vector<float> values, std::vector<Tensor> inputs,
              BackwardFn fn) {
  check_finite(op, values);
  Tape* tape = Tape::active();
  const bool track =
      tape && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(values), track);
  if (track) tape->record(op, std::move(inputs), out, std::move(fn));
  return out;
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView rows_of(const char* op, const Tensor& a) {
  if (a.rank() == 1) return {1, a.dim(0)};
  if (a.rank() == 2) return {a.dim(0), a.dim(1)};
  shape_fail(op, a.shape(), "expected rank 1 or 2");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<float> out(static_cast<std::size_t>(m * n));
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return finish("matmul", {a.dim(0), b.dim(1)}, std::move(out), {a, b},
                [a, b, m, k, n](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  ConstMatMap G(g.data(), m, n);
                  if (gin[0]) {
                    MatMap(gin[0]->data(), m, k).noalias() += G * ConstMatMap(b.data().data(), k, n).transpose();
                  }
                  if (gin[1]) {
                    MatMap(gin[1]->data(), k, n).noalias() += ConstMatMap(a.data().data(), m, k).transpose() * G;
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return finish("add", a.shape(), std::move(out), {a, b},
                [](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (auto* buf : gin) {
                    if (!buf) continue;
                    for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
                  }
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return finish("sub", a.shape(), std::move(out), {a, b},
                [](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  if (gin[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                  }
                  if (gin[1]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                  }
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return finish("mul", a.shape(), std::move(out), {a, b},
                [a, b](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  auto x = a.data(), y = b.data();
                  if (gin[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * y[i];
                  }
                  if (gin[1]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * x[i];
                  }
                });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || bias.dim(0) != a.dim(1)) shape_fail("add_row_bias", a.shape(), bias.shape());
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<float> out(a.numel());
  auto x = a.data(), bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + bv[c];
  }
  return finish("add_row_bias", a.shape(), std::move(out), {a, bias},
                [rows, cols](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  if (gin[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                  }
                  if (gin[1]) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      double acc = 0.0;
                      for (std::size_t r = 0; r < rows; ++r) acc += g[r * cols + c];
                      (*gin[1])[c] += static_cast<float>(acc);
                    }
                  }
                });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return finish("scale", a.shape(), std::move(out), {a},
                [factor](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * factor;
                });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return finish("sum", {}, {static_cast<float>(acc)}, {a},
                [](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (auto& v : *gin[0]) v += g[0];
                });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const double n = static_cast<double>(a.numel());
  return finish("mean", {}, {static_cast<float>(acc / n)}, {a},
                [n](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  const float share = static_cast<float>(g[0] / n);
                  for (auto& v : *gin[0]) v += share;
                });
}

Tensor sum_rows(const Tensor& a) {
  if (a.rank() != 2) shape_fail("sum_rows", a.shape(), "expected rank 2");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<float> out(rows);
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += x[r * cols + c];
    out[r] = static_cast<float>(acc);
  }
  return finish("sum_rows", {rows}, std::move(out), {a},
                [cols](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  auto& d = *gin[0];
                  for (std::size_t r = 0; r < g.size(); ++r) {
                    for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += g[r];
                  }
                });
}

Tensor log(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x[i]);
  return finish("log", a.shape(), std::move(out), {a},
                [a](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  auto x = a.data();
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / x[i];
                });
}

Tensor exp(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  auto kept = std::make_shared<std::vector<float>>(out);
  return finish("exp", a.shape(), std::move(out), {a},
                [kept](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*kept)[i];
                });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return finish("relu", a.shape(), std::move(out), {a},
                [a](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  auto x = a.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] > 0.0f) (*gin[0])[i] += g[i];
                  }
                });
}

Tensor softmax(const Tensor& a) {
  const auto [rows, cols] = rows_of("softmax", a);
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * cols;
    const float peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(static_cast<double>(row[c]) - peak);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = static_cast<float>(std::exp(static_cast<double>(row[c]) - peak) / total);
    }
  }
  auto kept = std::make_shared<std::vector<float>>(out);
  return finish("softmax", a.shape(), std::move(out), {a},
                [kept, rows = rows, cols = cols](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  const auto& y = *kept;
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(g[r * cols + c]) * y[r * cols + c];
                    for (std::size_t c = 0; c < cols; ++c) {
                      const auto i = r * cols + c;
                      (*gin[0])[i] += static_cast<float>(y[i] * (g[i] - dot));
                    }
                  }
                });
}

Tensor log_softmax(const Tensor& a) {
  const auto [rows, cols] = rows_of("log_softmax", a);
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * cols;
    const float peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(static_cast<double>(row[c]) - peak);
    const double log_total = std::log(total) + peak;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = static_cast<float>(row[c] - log_total);
  }
  auto kept = std::make_shared<std::vector<float>>(out);
  return finish("log_softmax", a.shape(), std::move(out), {a},
                [kept, rows = rows, cols = cols](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  const auto& y = *kept;
                  for (std::size_t r = 0; r < rows; ++r) {
                    double total = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
                    for (std::size_t c = 0; c < cols; ++c) {
                      const auto i = r * cols + c;
                      (*gin[0])[i] += static_cast<float>(g[i] - std::exp(static_cast<double>(y[i])) * total);
                    }
                  }
                });
}

Tensor l2_norm(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += static_cast<double>(v) * v;
  const double norm = std::sqrt(acc);
  return finish("l2_norm", {}, {static_cast<float>(norm)}, {a},
                [a, norm](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  if (norm == 0.0) return;
                  auto x = a.data();
                  for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += static_cast<float>(g[0] * x[i] / norm);
                });
}

Tensor pick(const Tensor& a, std::span<const std::uint32_t> index) {
  if (a.rank() != 2 || index.size() != a.dim(0)) {
    shape_fail("pick", a.shape(), Shape{index.size()});
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) {
      throw std::out_of_range("pick: index " + std::to_string(idx[r]) + " out of range for " + std::to_string(cols) +
                              " columns");
    }
    out[r] = a.data()[r * cols + idx[r]];
  }
  return finish("pick", {rows}, std::move(out), {a},
                [idx = std::move(idx), cols](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (std::size_t r = 0; r < g.size(); ++r) (*gin[0])[r * cols + idx[r]] += g[r];
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<float> out(a.data().begin(), a.data().end());
  return finish("reshape", std::move(shape), std::move(out), {a},
                [](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 1) shape_fail("flatten", a.shape(), "expected a batch axis");
  return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dParams params) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1)) shape_fail("conv2d", x.shape(), weight.shape());
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) shape_fail("conv2d", weight.shape(), bias.shape());
  if (params.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  const std::size_t P = params.padding, S = params.stride;
  if (H + 2 * P < KH || W + 2 * P < KW) shape_fail("conv2d", x.shape(), weight.shape());
  const std::size_t OH = (H + 2 * P - KH) / S + 1, OW = (W + 2 * P - KW) / S + 1;
  const std::size_t patch = C * KH * KW, positions = N * OH * OW;

  // im2col: one row per output position, columns ordered (c, kh, kw) to match weight layout.
  auto cols = std::make_shared<std::vector<float>>(positions * patch, 0.0f);
  auto xs = x.data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        float* row = cols->data() + ((n * OH + oh) * OW + ow) * patch;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t kh = 0; kh < KH; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) - static_cast<std::ptrdiff_t>(P);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * S + kw) - static_cast<std::ptrdiff_t>(P);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
              row[(c * KH + kh) * KW + kw] = xs[((n * C + c) * H + ih) * W + iw];
            }
          }
        }
      }
    }
  }

  const auto ep = static_cast<Eigen::Index>(positions), ek = static_cast<Eigen::Index>(patch),
             eo = static_cast<Eigen::Index>(O);
  RowMat prod = ConstMatMap(cols->data(), ep, ek) * ConstMatMap(weight.data().data(), eo, ek).transpose();

  std::vector<float> out(N * O * OH * OW);
  auto bv = bias.data();
  const std::size_t plane = OH * OW;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const float* src = prod.data() + (n * plane + p) * O;
      for (std::size_t o = 0; o < O; ++o) out[(n * O + o) * plane + p] = src[o] + bv[o];
    }
  }

  return finish(
      "conv2d", {N, O, OH, OW}, std::move(out), {x, weight, bias},
      [cols, weight, N, C, H, W, O, KH, KW, P, S, OH, OW, patch, positions](std::span<const float> g,
                                                                             std::span<GradBuffer* const> gin) {
        const std::size_t plane = OH * OW;
        RowMat G(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(O));
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t p = 0; p < plane; ++p) G(n * plane + p, o) = g[(n * O + o) * plane + p];
          }
        }
        const auto ep = static_cast<Eigen::Index>(positions), ek = static_cast<Eigen::Index>(patch),
                   eo = static_cast<Eigen::Index>(O);
        if (gin[1]) {
          MatMap(gin[1]->data(), eo, ek).noalias() += G.transpose() * ConstMatMap(cols->data(), ep, ek);
        }
        if (gin[2]) {
          for (std::size_t o = 0; o < O; ++o) {
            double acc = 0.0;
            for (std::size_t r = 0; r < positions; ++r) acc += G(r, o);
            (*gin[2])[o] += static_cast<float>(acc);
          }
        }
        if (gin[0]) {
          RowMat dcols = G * ConstMatMap(weight.data().data(), eo, ek);
          auto& dx = *gin[0];
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t oh = 0; oh < OH; ++oh) {
              for (std::size_t ow = 0; ow < OW; ++ow) {
                const float* row = dcols.data() + ((n * OH + oh) * OW + ow) * patch;
                for (std::size_t c = 0; c < C; ++c) {
                  for (std::size_t kh = 0; kh < KH; ++kh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) - static_cast<std::ptrdiff_t>(P);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                      const std::ptrdiff_t iw =
                          static_cast<std::ptrdiff_t>(ow * S + kw) - static_cast<std::ptrdiff_t>(P);
                      if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                      dx[((n * C + c) * H + ih) * W + iw] += row[(c * KH + kh) * KW + kw];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4) shape_fail("max_pool2d", x.shape(), "expected (N,C,H,W)");
  if (kernel == 0 || stride == 0) throw ShapeError("max_pool2d: kernel and stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < kernel || W < kernel) shape_fail("max_pool2d", x.shape(), "spatial size smaller than kernel");
  const std::size_t OH = (H - kernel) / stride + 1, OW = (W - kernel) / stride + 1;
  std::vector<float> out(N * C * OH * OW);
  std::vector<std::size_t> argmax(out.size());
  auto xs = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const float* src = xs.data() + nc * H * W;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        std::size_t best = (oh * stride) * W + ow * stride;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::size_t at = (oh * stride + kh) * W + ow * stride + kw;
            if (src[at] > src[best]) best = at;
          }
        }
        const std::size_t o = (nc * OH + oh) * OW + ow;
        out[o] = src[best];
        argmax[o] = nc * H * W + best;
      }
    }
  }
  return finish("max_pool2d", {N, C, OH, OW}, std::move(out), {x},
                [argmax = std::move(argmax)](std::span<const float> g, std::span<GradBuffer* const> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[argmax[i]] += g[i];
                });
}

}  // namespace daft::ops
