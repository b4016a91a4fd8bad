#include <cmath>
#include <random>

#include "checks.hpp"
#include "daft/analysis/metrics.hpp"
#include "daft/data/colored.hpp"
#include "daft/ops.hpp"
#include "daft/pipelines.hpp"

using namespace daft;
using namespace daft::pipelines;

namespace {

bool same_params(const nn::Model& a, const nn::Model& b) {
  const auto ta = a.named_tensors(), tb = b.named_tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!ta[i].value.bit_equal(tb[i].value)) return false;
  return true;
}

double max_trace_gap(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

double max_param_gap(const nn::Model& a, const nn::Model& b) {
  const auto ta = a.named_tensors(), tb = b.named_tensors();
  double worst = 0;
  for (std::size_t i = 0; i < ta.size(); ++i)
    for (std::size_t j = 0; j < ta[i].value.numel(); ++j)
      worst = std::max(worst, std::abs(double(ta[i].value.at(j)) - double(tb[i].value.at(j))));
  return worst;
}

TrainConfig small_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 16;
  cfg.seed = 5;
  cfg.perturb.epsilon = 0.3f;
  cfg.perturb.steps = 3;
  cfg.perturb.step_size = 0.15f;
  return cfg;
}

data::DomainDataset toy(std::size_t n = 64) {
  return data::make_two_feature_dataset(n, 11, 0.9, data::ColorMode::train_correlated);
}

}  // namespace

TEST_CASE("erm separates a linearly separable toy set") {
  const auto ds = toy(200);
  // Perceptron oracle: the set is separable iff the perceptron converges.
  {
    long double w0 = 0, w1 = 0, b = 0;
    bool converged = false;
    for (int epoch = 0; epoch < 1000 && !converged; ++epoch) {
      converged = true;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const long double s = ds.labels[i] == 1 ? 1 : -1;
        const long double x0 = ds.images.at(2 * i) - 0.5L, x1 = ds.images.at(2 * i + 1) - 0.5L;
        if (s * (w0 * x0 + w1 * x1 + b) <= 0) {
          w0 += s * x0;
          w1 += s * x1;
          b += s;
          converged = false;
        }
      }
    }
    REQUIRE(converged);
  }
  auto cfg = small_config(30000);
  cfg.batch_size = 32;
  const auto res = train_erm(nn::Model::init(nn::Architecture::identity(2, 2), 1), ds, cfg);
  CHECK(analysis::accuracy(res.model, ds) == 1.0);
  CHECK(res.losses.back() < res.losses.front());
}

TEST_CASE("zero steps leave the model untouched and training is deterministic") {
  const auto ds = toy();
  const auto m0 = nn::Model::init(nn::Architecture::parse("mlp:2:4:2"), 3);
  const auto none = train_erm(m0, ds, small_config(0));
  CHECK(none.losses.empty());
  CHECK(same_params(none.model, m0));
  for (auto* train : {&train_erm, &train_at, &train_trades, &adversarial_finetune}) {
    const auto a = (*train)(m0, ds, small_config(15));
    const auto b = (*train)(m0, ds, small_config(15));
    CHECK(same_params(a.model, b.model));
    CHECK(max_trace_gap(a.losses, b.losses) == 0.0);
  }
}

TEST_CASE("training settings are validated") {
  const auto ds = toy();
  const auto m = nn::Model::init(nn::Architecture::identity(2, 2), 0);
  auto cfg = small_config(1);
  cfg.lr = 1e-2;
  CHECK_THROWS_AS(train_erm(m, ds, cfg), std::invalid_argument);
  cfg = small_config(1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_erm(m, ds, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_erm(m, ds.subset(std::vector<std::size_t>{}), small_config(1)), std::invalid_argument);
}

TEST_CASE("a non-finite objective is reported with its step") {
  const auto ds = toy();
  const Objective blow_up = [](const nn::Model& m, const losses::Batch& b, std::size_t step) {
    Tensor l = losses::loss_std(m, b);
    if (step == 3) l = ops::log(ops::scale(l, 0.0f));
    return l;
  };
  try {
    fit(nn::Model::init(nn::Architecture::identity(2, 2), 0), ds, small_config(10), blow_up, nn::ParamGroup::all);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("reduction web: zero radius or zero weight collapses every method to erm") {
  const auto ds = toy();
  const auto m0 = nn::Model::init(nn::Architecture::parse("mlp:2:6:2"), 9);
  auto cfg = small_config(50);
  const auto erm = train_erm(m0, ds, cfg);

  SUBCASE("adversarial training at epsilon 0") {
    auto c = cfg;
    c.perturb.epsilon = 0.0f;
    const auto at = train_at(m0, ds, c);
    CHECK(max_trace_gap(at.losses, erm.losses) <= 1e-6);
    CHECK(max_param_gap(at.model, erm.model) <= 1e-6);
  }
  SUBCASE("trades at alpha 0") {
    auto c = cfg;
    c.distill.smooth_weight = 0.0f;
    const auto tr = train_trades(m0, ds, c);
    CHECK(max_trace_gap(tr.losses, erm.losses) <= 1e-6);
    CHECK(max_param_gap(tr.model, erm.model) <= 1e-6);
  }
  SUBCASE("trades at epsilon 0") {
    auto c = cfg;
    c.perturb.epsilon = 0.0f;
    c.distill.smooth_weight = 1.0f;
    const auto tr = train_trades(m0, ds, c);
    CHECK(max_trace_gap(tr.losses, erm.losses) <= 1e-6);
    CHECK(max_param_gap(tr.model, erm.model) <= 1e-6);
  }
  SUBCASE("fine-tuning at epsilon 0 and alpha 0 is head-only erm") {
    auto c = cfg;
    c.perturb.epsilon = 0.0f;
    c.distill.smooth_weight = 0.0f;
    const auto af = adversarial_finetune(m0, ds, c);
    const auto head_erm = fit(
        m0, ds, cfg,
        [](const nn::Model& m, const losses::Batch& b, std::size_t) {
          return losses::loss_std(m, b, nn::ParamGroup::head);
        },
        nn::ParamGroup::head);
    CHECK(max_trace_gap(af.losses, head_erm.losses) <= 1e-6);
    CHECK(max_param_gap(af.model, head_erm.model) <= 1e-6);
  }
}

TEST_CASE("adversarial fine-tuning never touches the feature extractor") {
  const auto ds = toy();
  const auto m0 = nn::Model::init(nn::Architecture::parse("mlp:2:6:2"), 4);
  auto cfg = small_config(30);
  cfg.distill.smooth_weight = 1.0f;
  for (auto space : {adversary::Space::input, adversary::Space::feature}) {
    cfg.perturb.space = space;
    const auto af = adversarial_finetune(m0, ds, cfg);
    CHECK(nn::extractor_hash(af.model) == nn::extractor_hash(m0));
    CHECK_FALSE(af.model.head().weight.bit_equal(m0.head().weight));
  }
}

namespace {

// Per-example oracle for the teacher mixture.
oracle::Vec tempered(const nn::Head& h, float x0, float x1, float tau) {
  oracle::Vec z(2);
  for (std::size_t c = 0; c < 2; ++c)
    z[c] = (static_cast<long double>(h.weight.at(c)) * x0 + static_cast<long double>(h.weight.at(2 + c)) * x1 +
            h.bias.at(c)) /
           tau;
  return oracle::softmax(z);
}

TeacherBundle toy_bundle() {
  nn::Model teacher = nn::Model::init(nn::Architecture::identity(2, 2), 0);
  teacher.set_head({Tensor({2, 2}, {1.0f, -1.0f, 0.5f, 2.0f}), Tensor({2}, {0.1f, -0.2f})});
  const nn::Head adv{Tensor({2, 2}, {-0.5f, 0.5f, 1.5f, -1.0f}), Tensor({2}, {0.0f, 0.3f})};
  return {teacher, adv, 2.0f};
}

}  // namespace

TEST_CASE("teacher soft labels pick the adversarial head exactly where it is right") {
  const auto bundle = toy_bundle();
  const Tensor x({4, 2}, {0.9f, 0.1f, 0.2f, 0.8f, 0.6f, 0.6f, 0.05f, 0.3f});
  std::vector<std::uint32_t> adv_pred(4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = tempered(bundle.adv_head, x.at(2 * i), x.at(2 * i + 1), 1.0f);
    adv_pred[i] = p[1] > p[0] ? 1 : 0;
  }
  const auto single = teacher_soft_labels(bundle, x, adv_pred, TeacherMode::single);
  const auto plain = teacher_soft_labels(bundle, x, adv_pred, TeacherMode::plain);

  SUBCASE("all correct") {
    CHECK(teacher_soft_labels(bundle, x, adv_pred, TeacherMode::multi).probs().bit_equal(single.probs()));
  }
  SUBCASE("all wrong") {
    std::vector<std::uint32_t> wrong(4);
    for (std::size_t i = 0; i < 4; ++i) wrong[i] = 1 - adv_pred[i];
    CHECK(teacher_soft_labels(bundle, x, wrong, TeacherMode::multi).probs().bit_equal(plain.probs()));
  }
  SUBCASE("mixed batch against the per-example rule") {
    const std::vector<std::uint32_t> y = {adv_pred[0], 1 - adv_pred[1], adv_pred[2], 1 - adv_pred[3]};
    const auto multi = teacher_soft_labels(bundle, x, y, TeacherMode::multi).probs();
    for (std::size_t i = 0; i < 4; ++i) {
      const bool adv_right = adv_pred[i] == y[i];
      const auto want = tempered(adv_right ? bundle.adv_head : bundle.teacher.head(), x.at(2 * i), x.at(2 * i + 1),
                                 bundle.temperature);
      for (std::size_t c = 0; c < 2; ++c) CHECK(multi.at(2 * i + c) == doctest::Approx(double(want[c])).epsilon(1e-6));
    }
  }
  CHECK_THROWS_AS(teacher_soft_labels(bundle, x, std::vector<std::uint32_t>{0, 1}, TeacherMode::multi), ShapeError);
  auto bad = bundle;
  bad.adv_head = nn::Head{Tensor::zeros({3, 2}), Tensor::zeros({2})};
  CHECK_THROWS_AS(teacher_soft_labels(bad, x, adv_pred, TeacherMode::single), ShapeError);
  CHECK(parse_teacher_mode(to_string(TeacherMode::multi)) == TeacherMode::multi);
  CHECK_THROWS_AS(parse_teacher_mode("both"), std::invalid_argument);
}

TEST_CASE("self-distillation starts at the fixed point") {
  const auto ds = toy();
  const auto teacher = nn::Model::init(nn::Architecture::parse("mlp:2:5:2"), 8);
  const TeacherBundle bundle{teacher, teacher.head(), 4.0f};
  for (auto mode : {TeacherMode::single, TeacherMode::multi, TeacherMode::plain}) {
    const auto res = distill(teacher, ds, bundle, mode, small_config(3));
    CHECK(std::abs(res.losses.front()) < 1e-6);
  }
}

TEST_CASE("run_daft equals the stages composed by hand") {
  const auto ds = toy();
  DaftConfig cfg;
  cfg.teacher_arch = nn::Architecture::parse("mlp:2:6:2");
  cfg.student_arch = nn::Architecture::parse("mlp:2:3:2");
  cfg.teacher = small_config(20);
  cfg.finetune = small_config(10);
  cfg.finetune.distill.smooth_weight = 0.5f;
  cfg.distill = small_config(15);
  cfg.distill.distill.temperature = 3.0f;
  cfg.seed = 21;
  const auto full = run_daft(cfg, ds);

  const auto t = train_erm(nn::Model::init(cfg.teacher_arch, teacher_init_seed(cfg.seed)), ds, cfg.teacher);
  const auto f = adversarial_finetune(t.model, ds, cfg.finetune);
  const TeacherBundle bundle{t.model, f.model.head(), 3.0f};
  const auto s = distill(nn::Model::init(cfg.student_arch, student_init_seed(cfg.seed)), ds, bundle, cfg.mode,
                         cfg.distill);
  CHECK(same_params(full.teacher, t.model));
  CHECK(same_params(full.finetuned, f.model));
  CHECK(same_params(full.student, s.model));
  CHECK(max_trace_gap(full.distill_losses, s.losses) == 0.0);
  CHECK(teacher_init_seed(cfg.seed) != student_init_seed(cfg.seed));
}
