#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "daft/nn/model.hpp"

namespace daft::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}
};

/// One bias-corrected Adam update applied in place to `params`.
/// Moments are allocated lazily on the first step; later calls must pass the
/// same parameter list in the same order.
void adam_step(AdamState& state, std::span<const ParamRef> params, std::span<const Tensor> grads);

}  // namespace daft::nn
