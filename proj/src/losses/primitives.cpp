#include "daft/losses/primitives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "daft/ops.hpp"

namespace daft::losses {

SoftLabel::SoftLabel(Tensor probs) : probs_(std::move(probs)) {
  if (probs_.rank() != 2) throw ShapeError("SoftLabel: expected (batch, classes), got " + shape_str(probs_.shape()));
  const std::size_t rows = probs_.dim(0), cols = probs_.dim(1);
  auto p = probs_.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const float v = p[r * cols + c];
      if (!(v >= 0.0f)) throw std::domain_error("SoftLabel: negative or NaN probability in row " + std::to_string(r));
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-5) {
      throw std::domain_error("SoftLabel: row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
}

SoftLabel SoftLabel::from_logits(const Tensor& logits, float temperature) {
  if (!(temperature > 0.0f)) throw std::invalid_argument("SoftLabel: temperature must be positive");
  return SoftLabel(ops::softmax(ops::scale(logits.detach(), 1.0f / temperature)));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  for (auto y : labels) {
    if (y >= logits.dim(1)) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(logits.dim(1)) + ")");
    }
  }
  return ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), labels)), -1.0f);
}

double kl_div(const SoftLabel& p, const SoftLabel& q) {
  if (p.probs().shape() != q.probs().shape()) {
    throw ShapeError("kl_div: shape mismatch " + shape_str(p.probs().shape()) + " vs " + shape_str(q.probs().shape()));
  }
  auto a = p.probs().data(), b = q.probs().data();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0f) continue;
    if (b[i] == 0.0f) throw std::domain_error("kl_div: q is zero where p has mass (index " + std::to_string(i) + ")");
    total += static_cast<double>(a[i]) * (std::log(static_cast<double>(a[i])) - std::log(static_cast<double>(b[i])));
  }
  return total / static_cast<double>(p.batch());
}

namespace {

void require_match(const char* op, const SoftLabel& target, const Tensor& logits) {
  if (target.probs().shape() != logits.shape()) {
    throw ShapeError(std::string(op) + ": target " + shape_str(target.probs().shape()) + " vs logits " +
                     shape_str(logits.shape()));
  }
}

}  // namespace

Tensor kl_to_logits(const SoftLabel& target, const Tensor& logits) {
  require_match("kl_to_logits", target, logits);
  double entropy_term = 0.0;
  for (float v : target.probs().data()) {
    if (v > 0.0f) entropy_term += static_cast<double>(v) * std::log(static_cast<double>(v));
  }
  const auto rows = static_cast<float>(target.batch());
  Tensor cross = ops::scale(ops::sum(ops::mul(target.probs(), ops::log_softmax(logits))), -1.0f / rows);
  return ops::add(cross, Tensor::scalar(static_cast<float>(entropy_term / rows)));
}

Tensor kl_from_logits(const Tensor& logits, const SoftLabel& target) {
  require_match("kl_from_logits", target, logits);
  std::vector<float> log_target(target.probs().numel());
  auto t = target.probs().data();
  for (std::size_t i = 0; i < log_target.size(); ++i) {
    if (t[i] == 0.0f) throw std::domain_error("kl_from_logits: target has zero probability at index " + std::to_string(i));
    log_target[i] = std::log(t[i]);
  }
  Tensor log_q = Tensor(target.probs().shape(), std::move(log_target));
  Tensor log_p = ops::log_softmax(logits);
  const auto rows = static_cast<float>(target.batch());
  return ops::scale(ops::sum(ops::mul(ops::exp(log_p), ops::sub(log_p, log_q))), 1.0f / rows);
}

Tensor kl_between_logits(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.shape() != q_logits.shape() || p_logits.rank() != 2) {
    throw ShapeError("kl_between_logits: shape mismatch " + shape_str(p_logits.shape()) + " vs " +
                     shape_str(q_logits.shape()));
  }
  Tensor log_p = ops::log_softmax(p_logits);
  Tensor log_q = ops::log_softmax(q_logits);
  const auto rows = static_cast<float>(p_logits.dim(0));
  return ops::scale(ops::sum(ops::mul(ops::exp(log_p), ops::sub(log_p, log_q))), 1.0f / rows);
}

}  // namespace daft::losses
