#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "daft/adversary.hpp"
#include "daft/data/dataset.hpp"
#include "daft/losses/losses.hpp"
#include "daft/nn/model.hpp"

namespace daft::pipelines {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  adversary::PerturbConfig perturb;
  losses::DistillConfig distill;

  void validate() const;
};

struct TrainResult {
  nn::Model model;
  std::vector<float> losses;  // one entry per optimizer step
};

/// Per-step training objective; `step` seeds any randomness inside it.
using Objective = std::function<Tensor(const nn::Model& model, const losses::Batch& batch, std::size_t step)>;

/// Minibatch Adam loop shared by every pipeline. Batches come from seeded
/// per-epoch shuffles of `data`; only parameters in `group` are updated.
/// Throws NumericalError naming the step on a non-finite loss or gradient.
TrainResult fit(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg, const Objective& objective,
                nn::ParamGroup group);

/// PerturbConfig for optimizer step `step`: the base config with a derived seed.
adversary::PerturbConfig perturb_for_step(const TrainConfig& cfg, std::size_t step);

TrainResult train_erm(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg);
/// Full-network adversarial training on loss_adv.
TrainResult train_at(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg);
/// Full-network loss_std + alpha * loss_smooth.
TrainResult train_trades(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg);
/// Head-only training on loss_adv + alpha * loss_smooth (alpha = cfg.distill.smooth_weight);
/// the extractor is bit-identical afterwards.
TrainResult adversarial_finetune(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg);

/// A standard teacher (theta_std, W_std) plus its adversarially fine-tuned head W_adv.
struct TeacherBundle {
  nn::Model teacher;
  nn::Head adv_head;
  float temperature = 4.0f;

  void validate() const;
};

enum class TeacherMode {
  single,  // adv head everywhere (DAFT-Single)
  multi,   // adv head where it predicts the label, std head elsewhere (DAFT)
  plain,   // std head everywhere (vanilla distillation)
};

std::string to_string(TeacherMode mode);
TeacherMode parse_teacher_mode(const std::string& s);

/// Tempered teacher distribution per example, chosen by `mode`.
losses::SoftLabel teacher_soft_labels(const TeacherBundle& bundle, const Tensor& x, std::span<const std::uint32_t> y,
                                      TeacherMode mode);

/// Student training on loss_distill against teacher_soft_labels.
TrainResult distill(nn::Model student, const data::DomainDataset& data, const TeacherBundle& bundle, TeacherMode mode,
                    const TrainConfig& cfg);

/// Stage configuration of the full pipeline: standard teacher training,
/// smooth adversarial fine-tuning of its head, then distillation.
struct DaftConfig {
  nn::Architecture teacher_arch;
  nn::Architecture student_arch;
  TrainConfig teacher;
  TrainConfig finetune;
  TrainConfig distill;
  TeacherMode mode = TeacherMode::multi;
  std::uint64_t seed = 0;  // model initialization seed
};

struct DaftResult {
  nn::Model teacher;
  nn::Model finetuned;  // teacher extractor with W_adv
  nn::Model student;
  std::vector<float> teacher_losses;
  std::vector<float> finetune_losses;
  std::vector<float> distill_losses;
};

DaftResult run_daft(const DaftConfig& cfg, const data::DomainDataset& data);

/// Seeds for initializing the teacher and student of a run.
std::uint64_t teacher_init_seed(std::uint64_t seed);
std::uint64_t student_init_seed(std::uint64_t seed);

}  // namespace daft::pipelines
