#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daft/adversary.hpp"
#include "daft/losses/primitives.hpp"
#include "daft/nn/model.hpp"

namespace daft::losses {

struct Batch {
  Tensor x;
  std::vector<std::uint32_t> y;
  std::vector<std::size_t> rows;  // source dataset row per example, when known
};

/// Direction of the distillation KL.
enum class KlOrder {
  teacher_target,  // KL(teacher || student)
  student_first,   // KL(student || teacher)
};

struct DistillConfig {
  float temperature = 4.0f;
  float smooth_weight = 1e-3f;  // alpha
  KlOrder order = KlOrder::teacher_target;
  /// Reuse the cross-entropy PGD point for the smoothness term instead of
  /// running a second KL-driven maximization.
  bool share_adversarial_point = false;

  void validate() const;
};

/// Clean cross-entropy; gradients reach whatever `group` exposes.
Tensor loss_std(const nn::Model& model, const Batch& batch, nn::ParamGroup group = nn::ParamGroup::all);

/// Cross-entropy at the PGD point. The perturbation is a constant for the
/// outer step; by default only the head receives gradients.
Tensor loss_adv(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                nn::ParamGroup group = nn::ParamGroup::head);

/// KL(clean softmax || softmax at the KL-maximizing point), temperature 1.
Tensor loss_smooth(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                   nn::ParamGroup group = nn::ParamGroup::head);

/// loss_adv + alpha * loss_smooth, each with its own inner maximization
/// unless cfg.share_adversarial_point is set.
Tensor finetune_loss(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                     const DistillConfig& dcfg, nn::ParamGroup group = nn::ParamGroup::head);

/// tau^2 * KL between teacher soft labels and the student's tempered softmax.
Tensor loss_distill(const nn::Model& student, const Tensor& x, const SoftLabel& teacher_soft, float temperature,
                    KlOrder order = KlOrder::teacher_target, nn::ParamGroup group = nn::ParamGroup::all);

}  // namespace daft::losses
