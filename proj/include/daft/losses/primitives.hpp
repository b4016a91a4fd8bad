#pragma once

#include <cstdint>
#include <span>

#include "daft/tensor.hpp"

namespace daft::losses {

/// Row-stochastic (batch, classes) matrix: rows sum to 1 within 1e-5, entries >= 0.
class SoftLabel {
 public:
  SoftLabel() = default;
  /// Validates the distribution invariant.
  explicit SoftLabel(Tensor probs);
  static SoftLabel from_logits(const Tensor& logits, float temperature = 1.0f);

  const Tensor& probs() const { return probs_; }
  std::size_t batch() const { return probs_.dim(0); }
  std::size_t classes() const { return probs_.dim(1); }

 private:
  Tensor probs_;
};

/// Mean over the batch of -log softmax(logits)[y].
Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels);

/// Mean over rows of sum_i p_i ln(p_i / q_i), using 0 ln(0/q) = 0.
/// Throws std::domain_error when q_i = 0 where p_i > 0.
double kl_div(const SoftLabel& p, const SoftLabel& q);

/// KL(target || softmax(logits)) averaged over rows; `target` is a constant.
Tensor kl_to_logits(const SoftLabel& target, const Tensor& logits);

/// KL(softmax(logits) || target) averaged over rows; `target` is a constant
/// and must be strictly positive wherever the model puts mass.
Tensor kl_from_logits(const Tensor& logits, const SoftLabel& target);

/// KL(softmax(p_logits) || softmax(q_logits)) averaged over rows, with
/// gradients flowing through both arguments.
Tensor kl_between_logits(const Tensor& p_logits, const Tensor& q_logits);

}  // namespace daft::losses
