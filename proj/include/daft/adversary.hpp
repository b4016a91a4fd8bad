#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "daft/nn/model.hpp"
#include "daft/tensor.hpp"

namespace daft::adversary {

enum class Space { input, feature };
enum class Init { zero, random_in_ball };

std::string to_string(Space s);
Space parse_space(const std::string& s);

/// l2-ball PGD settings. The radius applies per example, measured over the
/// example's flattened slice of the perturbed tensor.
struct PerturbConfig {
  float epsilon = 0.1f;
  unsigned steps = 3;
  float step_size = 0.05f;
  Space space = Space::input;
  Init init = Init::zero;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Maps a perturbed point (batch, ...) to a scalar that sums independent
/// per-example terms. Called with an active tape and a point that requires
/// gradients.
using Objective = std::function<Tensor(const Tensor& point)>;

/// Projected normalized-gradient ascent on `objective` inside the per-example
/// ball of radius cfg.epsilon around `x0`. Each of the cfg.steps iterations
/// moves every example by step_size along its own unit gradient, then
/// projects back onto the ball. Returns the final point (untracked).
Tensor pgd_maximize(const Objective& objective, const Tensor& x0, const PerturbConfig& cfg);

/// Exact l2 projection of each example's row of `delta` onto the ball.
void project_to_ball(std::span<float> delta, std::size_t batch, float epsilon);

/// Largest per-example l2 norm of (a - b).
double max_example_distance(const Tensor& a, const Tensor& b);

enum class LossKind { cross_entropy, kl_to_clean };

/// The worst-case point for one of the two inner maximizations. For
/// space=input `point` is the perturbed image batch; for space=feature it is
/// the perturbed penultimate representation. `base` is the clean counterpart.
struct PerturbResult {
  Tensor point;
  Tensor base;
  Space space;

  /// point - base
  Tensor delta() const;
};

/// Runs PGD against the frozen model with `head` on top. Never modifies any
/// parameter. For kl_to_clean the clean logits are computed once and held
/// fixed; because the KL objective has a zero gradient at the clean point,
/// kl_to_clean always starts from a seeded random point in the ball.
PerturbResult perturb_point(const nn::Model& model, const nn::Head& head, const Tensor& x,
                            std::span<const std::uint32_t> labels, LossKind kind, const PerturbConfig& cfg);

}  // namespace daft::adversary
