#include "daft/pipelines.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "daft/nn/adam.hpp"
#include "daft/ops.hpp"
#include "daft/random.hpp"
#include "daft/tape.hpp"

namespace daft::pipelines {

namespace {

constexpr std::uint64_t kPerturbStream = 0x5047445345454421ULL;
constexpr std::uint64_t kBatchStream = 0x4241544348455321ULL;

// Seeded epoch shuffles, consumed batch_size rows at a time.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(std::min(batch_size, n)), seed_(seed) {
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> rows;
    rows.reserve(batch_size_);
    while (rows.size() < batch_size_) {
      if (cursor_ == order_.size()) {
        ++epoch_;
        reshuffle();
      }
      rows.push_back(order_[cursor_++]);
    }
    return rows;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed_, epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
  }

  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 1e-6 && lr <= 1e-3)) throw std::invalid_argument("TrainConfig: lr must lie in [1e-6, 1e-3]");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  perturb.validate();
  distill.validate();
}

adversary::PerturbConfig perturb_for_step(const TrainConfig& cfg, std::size_t step) {
  auto p = cfg.perturb;
  p.seed = derive_seed(cfg.seed ^ kPerturbStream, step);
  return p;
}

TrainResult fit(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg, const Objective& objective,
                nn::ParamGroup group) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("fit: empty training set");
  TrainResult result;
  result.losses.reserve(cfg.steps);
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed ^ kBatchStream);
  nn::AdamState adam(cfg.lr);
  auto params = model.parameters(group);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rows = sampler.next();
    const losses::Batch batch{data.gather_images(rows), data.gather_labels(rows), rows};
    try {
      Tape tape;
      Tensor loss = objective(model, batch, step);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      if (loss.requires_grad()) {
        const auto g = backward(loss, tape);
        for (const auto& p : params) grads.push_back(g.of(*p.tensor));
      } else {
        for (const auto& p : params) grads.push_back(Tensor::zeros(p.tensor->shape()));
      }
      nn::adam_step(adam, params, grads);
      result.losses.push_back(loss.item());
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(step) + ": " + e.what());
    }
  }
  result.model = std::move(model);
  return result;
}

TrainResult train_erm(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg) {
  return fit(
      std::move(model), data, cfg,
      [](const nn::Model& m, const losses::Batch& b, std::size_t) { return losses::loss_std(m, b, nn::ParamGroup::all); },
      nn::ParamGroup::all);
}

TrainResult train_at(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg) {
  return fit(
      std::move(model), data, cfg,
      [&cfg](const nn::Model& m, const losses::Batch& b, std::size_t step) {
        return losses::loss_adv(m, b, perturb_for_step(cfg, step), nn::ParamGroup::all);
      },
      nn::ParamGroup::all);
}

TrainResult train_trades(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg) {
  return fit(
      std::move(model), data, cfg,
      [&cfg](const nn::Model& m, const losses::Batch& b, std::size_t step) {
        Tensor total = losses::loss_std(m, b, nn::ParamGroup::all);
        const float alpha = cfg.distill.smooth_weight;
        if (alpha == 0.0f) return total;
        Tensor smooth = losses::loss_smooth(m, b, perturb_for_step(cfg, step), nn::ParamGroup::all);
        return ops::add(total, ops::scale(smooth, alpha));
      },
      nn::ParamGroup::all);
}

TrainResult adversarial_finetune(nn::Model model, const data::DomainDataset& data, const TrainConfig& cfg) {
  const auto before = nn::extractor_hash(model);
  auto result = fit(
      std::move(model), data, cfg,
      [&cfg](const nn::Model& m, const losses::Batch& b, std::size_t step) {
        return losses::finetune_loss(m, b, perturb_for_step(cfg, step), cfg.distill, nn::ParamGroup::head);
      },
      nn::ParamGroup::head);
  if (nn::extractor_hash(result.model) != before) {
    throw std::logic_error("adversarial_finetune: feature extractor changed during head-only training");
  }
  return result;
}

void TeacherBundle::validate() const {
  if (adv_head.weight.shape() != teacher.head().weight.shape() || adv_head.bias.shape() != teacher.head().bias.shape()) {
    throw ShapeError("TeacherBundle: adversarial head " + shape_str(adv_head.weight.shape()) +
                     " differs from standard head " + shape_str(teacher.head().weight.shape()));
  }
  if (!(temperature > 0.0f)) throw std::invalid_argument("TeacherBundle: temperature must be positive");
}

std::string to_string(TeacherMode mode) {
  switch (mode) {
    case TeacherMode::single: return "single";
    case TeacherMode::multi: return "multi";
    case TeacherMode::plain: return "plain";
  }
  return "?";
}

TeacherMode parse_teacher_mode(const std::string& s) {
  if (s == "single") return TeacherMode::single;
  if (s == "multi") return TeacherMode::multi;
  if (s == "plain") return TeacherMode::plain;
  throw std::invalid_argument("unknown distillation mode '" + s + "' (expected single|multi|plain)");
}

losses::SoftLabel teacher_soft_labels(const TeacherBundle& bundle, const Tensor& x, std::span<const std::uint32_t> y,
                                      TeacherMode mode) {
  bundle.validate();
  const Tensor f = bundle.teacher.features(x, nn::ParamGroup::none);
  const Tensor adv_logits = nn::logits_from_features(bundle.adv_head, f, false);
  const float inv_t = 1.0f / bundle.temperature;
  if (mode == TeacherMode::single) return losses::SoftLabel(ops::softmax(ops::scale(adv_logits, inv_t)));
  const Tensor std_logits = nn::logits_from_features(bundle.teacher.head(), f, false);
  const Tensor std_soft = ops::softmax(ops::scale(std_logits, inv_t));
  if (mode == TeacherMode::plain) return losses::SoftLabel(std_soft);

  if (y.size() != x.dim(0)) throw ShapeError("teacher_soft_labels: label count does not match batch");
  const Tensor adv_soft = ops::softmax(ops::scale(adv_logits, inv_t));
  const std::size_t rows = adv_logits.dim(0), cols = adv_logits.dim(1);
  std::vector<float> mixed(rows * cols);
  auto a = adv_logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = a.subspan(r * cols, cols);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const Tensor& src = pred == y[r] ? adv_soft : std_soft;
    std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                mixed.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return losses::SoftLabel(Tensor({rows, cols}, std::move(mixed)));
}

TrainResult distill(nn::Model student, const data::DomainDataset& data, const TeacherBundle& bundle, TeacherMode mode,
                    const TrainConfig& cfg) {
  bundle.validate();
  // The teacher is fixed, so its labels are computed once for every row.
  const std::size_t n = data.size(), classes = bundle.teacher.arch().num_classes;
  std::vector<float> soft(n * classes);
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> rows(std::min(chunk, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto labels = teacher_soft_labels(bundle, data.gather_images(rows), data.gather_labels(rows), mode);
    std::copy(labels.probs().data().begin(), labels.probs().data().end(),
              soft.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }

  const float tau = bundle.temperature;
  const auto order = cfg.distill.order;
  return fit(
      std::move(student), data, cfg,
      [&](const nn::Model& m, const losses::Batch& b, std::size_t) {
        std::vector<float> target(b.rows.size() * classes);
        for (std::size_t i = 0; i < b.rows.size(); ++i) {
          std::copy_n(soft.begin() + static_cast<std::ptrdiff_t>(b.rows[i] * classes), classes,
                      target.begin() + static_cast<std::ptrdiff_t>(i * classes));
        }
        const losses::SoftLabel teacher(Tensor({b.rows.size(), classes}, std::move(target)));
        return losses::loss_distill(m, b.x, teacher, tau, order, nn::ParamGroup::all);
      },
      nn::ParamGroup::all);
}

std::uint64_t teacher_init_seed(std::uint64_t seed) { return derive_seed(seed, 0x7465616368ULL); }
std::uint64_t student_init_seed(std::uint64_t seed) { return derive_seed(seed, 0x73747564ULL); }

DaftResult run_daft(const DaftConfig& cfg, const data::DomainDataset& data) {
  DaftResult out;
  auto teacher = train_erm(nn::Model::init(cfg.teacher_arch, teacher_init_seed(cfg.seed)), data, cfg.teacher);
  out.teacher = teacher.model;
  out.teacher_losses = std::move(teacher.losses);

  auto tuned = adversarial_finetune(out.teacher, data, cfg.finetune);
  out.finetuned = std::move(tuned.model);
  out.finetune_losses = std::move(tuned.losses);

  const TeacherBundle bundle{out.teacher, out.finetuned.head(), cfg.distill.distill.temperature};
  auto student = distill(nn::Model::init(cfg.student_arch, student_init_seed(cfg.seed)), data, bundle, cfg.mode,
                         cfg.distill);
  out.student = std::move(student.model);
  out.distill_losses = std::move(student.losses);
  return out;
}

}  // namespace daft::pipelines
