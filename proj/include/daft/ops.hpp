#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "daft/tensor.hpp"

// Differentiable tensor ops. Each op validates shapes (ShapeError naming the
// op and the offending shapes), rejects non-finite outputs (NumericalError)
// and records itself on the active Tape when an input requires gradients.
namespace daft::ops {

/// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum of equally shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// (m,n) + (n) broadcast along rows.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, float factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// (m,n) -> (m)
Tensor sum_rows(const Tensor& a);

Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);

// Row-wise over the last axis of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

/// Euclidean norm of the whole tensor, as a scalar.
Tensor l2_norm(const Tensor& a);

/// Rows of (m,n) indexed by `index[i]` -> (m).
Tensor pick(const Tensor& a, std::span<const std::uint32_t> index);

Tensor reshape(const Tensor& a, Shape shape);
/// (N, ...) -> (N, prod(...))
Tensor flatten(const Tensor& a);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x (N,C,H,W), weight (O,C,kh,kw), bias (O) -> (N,O,OH,OW), via im2col + GEMM.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dParams params);

/// Non-overlapping-or-strided max pooling over (N,C,H,W); floor semantics.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

}  // namespace daft::ops
