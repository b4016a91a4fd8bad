#include "daft/nn/adam.hpp"

#include <cmath>
#include <string>

namespace daft::nn {

void adam_step(AdamState& state, std::span<const ParamRef> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor->numel(), 0.0f);
      state.second_moment.emplace_back(p.tensor->numel(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].tensor->shape()) {
      throw ShapeError("adam_step: gradient " + shape_str(grads[i].shape()) + " does not match parameter " +
                       params[i].name + shape_str(params[i].tensor->shape()));
    }
    for (float g : grads[i].data()) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient for parameter " + params[i].name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const auto b1 = static_cast<float>(state.beta1);
  const auto b2 = static_cast<float>(state.beta2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor->mutable_data();
    auto g = grads[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] = static_cast<float>(w[j] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

}  // namespace daft::nn
