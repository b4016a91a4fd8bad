#include "daft/losses/losses.hpp"

#include <stdexcept>

#include "daft/ops.hpp"

namespace daft::losses {

namespace {

using adversary::LossKind;
using adversary::PerturbResult;
using adversary::Space;

bool tracks_extractor(nn::ParamGroup g) { return g == nn::ParamGroup::all || g == nn::ParamGroup::extractor; }
bool tracks_head(nn::ParamGroup g) { return g == nn::ParamGroup::all || g == nn::ParamGroup::head; }

// Logits at a PGD point with gradient tracking per `group`. In feature space
// the perturbation is added to the (possibly tracked) clean features.
Tensor logits_at(const nn::Model& model, const Batch& batch, const PerturbResult& adv, nn::ParamGroup group) {
  if (adv.space == Space::input) return model.logits(adv.point, group);
  const Tensor f = tracks_extractor(group) ? ops::add(model.features(batch.x, group), adv.delta()) : adv.point;
  return nn::logits_from_features(model.head(), f, tracks_head(group));
}

}  // namespace

void DistillConfig::validate() const {
  if (!(temperature > 0.0f)) throw std::invalid_argument("DistillConfig: temperature must be positive");
  if (!(smooth_weight >= 0.0f)) throw std::invalid_argument("DistillConfig: smooth_weight must be non-negative");
}

Tensor loss_std(const nn::Model& model, const Batch& batch, nn::ParamGroup group) {
  return cross_entropy(model.logits(batch.x, group), batch.y);
}

Tensor loss_adv(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                nn::ParamGroup group) {
  const auto adv = adversary::perturb_point(model, model.head(), batch.x, batch.y, LossKind::cross_entropy, cfg);
  return cross_entropy(logits_at(model, batch, adv, group), batch.y);
}

namespace {

Tensor smooth_from_point(const nn::Model& model, const Batch& batch, const PerturbResult& adv, nn::ParamGroup group) {
  Tensor clean = model.logits(batch.x, group);
  return kl_between_logits(clean, logits_at(model, batch, adv, group));
}

}  // namespace

Tensor loss_smooth(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                   nn::ParamGroup group) {
  const auto adv = adversary::perturb_point(model, model.head(), batch.x, batch.y, LossKind::kl_to_clean, cfg);
  return smooth_from_point(model, batch, adv, group);
}

Tensor finetune_loss(const nn::Model& model, const Batch& batch, const adversary::PerturbConfig& cfg,
                     const DistillConfig& dcfg, nn::ParamGroup group) {
  dcfg.validate();
  const auto adv = adversary::perturb_point(model, model.head(), batch.x, batch.y, LossKind::cross_entropy, cfg);
  Tensor total = cross_entropy(logits_at(model, batch, adv, group), batch.y);
  if (dcfg.smooth_weight == 0.0f) return total;
  Tensor smooth = dcfg.share_adversarial_point ? smooth_from_point(model, batch, adv, group)
                                               : loss_smooth(model, batch, cfg, group);
  return ops::add(total, ops::scale(smooth, dcfg.smooth_weight));
}

Tensor loss_distill(const nn::Model& student, const Tensor& x, const SoftLabel& teacher_soft, float temperature,
                    KlOrder order, nn::ParamGroup group) {
  if (!(temperature > 0.0f)) throw std::invalid_argument("loss_distill: temperature must be positive");
  Tensor tempered = ops::scale(student.logits(x, group), 1.0f / temperature);
  Tensor kl = order == KlOrder::teacher_target ? kl_to_logits(teacher_soft, tempered)
                                               : kl_from_logits(tempered, teacher_soft);
  return ops::scale(kl, temperature * temperature);
}

}  // namespace daft::losses
