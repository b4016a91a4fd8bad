#include <cmath>
#include <random>
#include <stdexcept>

#include "daft/adversary.hpp"
#include "daft/losses/primitives.hpp"
#include "daft/ops.hpp"
#include "daft/random.hpp"
#include "daft/tape.hpp"

namespace daft::adversary {

std::string to_string(Space s) { return s == Space::input ? "input" : "feature"; }

Space parse_space(const std::string& s) {
  if (s == "input") return Space::input;
  if (s == "feature") return Space::feature;
  throw std::invalid_argument("unknown perturbation space '" + s + "' (expected input|feature)");
}

void PerturbConfig::validate() const {
  if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) throw std::invalid_argument("PerturbConfig: epsilon must be >= 0");
  if (steps > 0 && !(step_size > 0.0f)) throw std::invalid_argument("PerturbConfig: step_size must be positive");
}

void project_to_ball(std::span<float> delta, std::size_t batch, float epsilon) {
  const std::size_t width = delta.size() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = delta.subspan(b * width, width);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm > epsilon) {
      const double factor = epsilon / norm;
      for (auto& v : row) v = static_cast<float>(v * factor);
    }
  }
}

double max_example_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_example_distance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t batch = a.dim(0), width = a.numel() / batch;
  double worst = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double d = static_cast<double>(a.at(i * width + j)) - b.at(i * width + j);
      sq += d * d;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

namespace {

void random_in_ball(std::span<float> delta, std::size_t batch, float epsilon, std::uint64_t seed) {
  const std::size_t width = delta.size() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    auto row = delta.subspan(b * width, width);
    double sq = 0.0;
    std::vector<double> dir(width);
    for (auto& v : dir) {
      v = normal(rng);
      sq += v * v;
    }
    const double radius = epsilon * std::pow(uniform(rng), 1.0 / static_cast<double>(width));
    const double factor = sq > 0.0 ? radius / std::sqrt(sq) : 0.0;
    for (std::size_t j = 0; j < width; ++j) row[j] = static_cast<float>(dir[j] * factor);
  }
}

}  // namespace

Tensor pgd_maximize(const Objective& objective, const Tensor& x0, const PerturbConfig& cfg) {
  cfg.validate();
  if (x0.rank() < 1) throw ShapeError("pgd_maximize: point needs a batch axis, got " + shape_str(x0.shape()));
  const std::size_t batch = x0.dim(0), width = x0.numel() / batch;

  std::vector<float> delta(x0.numel(), 0.0f);
  if (cfg.init == Init::random_in_ball) random_in_ball(delta, batch, cfg.epsilon, cfg.seed);
  if (cfg.epsilon == 0.0f) std::fill(delta.begin(), delta.end(), 0.0f);

  auto shifted = [&] {
    std::vector<float> v(x0.data().begin(), x0.data().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += delta[i];
    return v;
  };

  if (cfg.epsilon > 0.0f) {
    for (unsigned step = 0; step < cfg.steps; ++step) {
      Tape tape;
      Tensor point(x0.shape(), shifted(), true);
      Tensor value = objective(point);
      if (value.numel() != 1) throw ShapeError("pgd_maximize: objective must return a scalar");
      if (!value.requires_grad()) break;  // objective does not depend on the point
      Tensor grad = backward(value, tape).of(point);
      auto g = grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        double sq = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          const float v = g[b * width + j];
          if (!std::isfinite(v)) throw NumericalError("pgd_maximize: non-finite gradient at step " + std::to_string(step));
          sq += static_cast<double>(v) * v;
        }
        if (sq == 0.0) continue;
        const double factor = cfg.step_size / std::sqrt(sq);
        for (std::size_t j = 0; j < width; ++j) delta[b * width + j] += static_cast<float>(g[b * width + j] * factor);
      }
      project_to_ball(delta, batch, cfg.epsilon);
    }
  }
  return Tensor(x0.shape(), shifted());
}

Tensor PerturbResult::delta() const { return ops::sub(point.detach(), base.detach()); }

PerturbResult perturb_point(const nn::Model& model, const nn::Head& head, const Tensor& x,
                            std::span<const std::uint32_t> labels, LossKind kind, const PerturbConfig& cfg) {
  const Tensor clean_input = x.detach();
  const Tensor base = cfg.space == Space::input ? clean_input : model.features(clean_input, nn::ParamGroup::none);
  const auto to_logits = [&](const Tensor& point) {
    const Tensor f = cfg.space == Space::input ? model.features(point, nn::ParamGroup::none) : point;
    return nn::logits_from_features(head, f, false);
  };

  PerturbConfig run = cfg;
  Objective objective;
  if (kind == LossKind::cross_entropy) {
    objective = [&](const Tensor& point) { return losses::cross_entropy(to_logits(point), labels); };
  } else {
    const losses::SoftLabel clean = losses::SoftLabel::from_logits(to_logits(base));
    objective = [&to_logits, clean](const Tensor& point) { return losses::kl_to_logits(clean, to_logits(point)); };
    run.init = Init::random_in_ball;
  }
  return PerturbResult{pgd_maximize(objective, base, run), base, cfg.space};
}

}  // namespace daft::adversary
