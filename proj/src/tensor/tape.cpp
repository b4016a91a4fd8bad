#include "daft/tape.hpp"

#include <algorithm>

namespace daft {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  produced_by_[output.id()] = records_.size();
  records_.push_back(Record{std::move(op), std::move(inputs), output, std::move(fn)});
}

bool Tape::contains(const Tensor& t) const { return produced_by_.count(t.id()) != 0; }

Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

Gradients backward(const Tensor& loss, const Tape& tape) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!tape.contains(loss)) throw std::invalid_argument("backward: loss was not recorded on this tape");

  Gradients result;
  result.grads_[loss.id()] = GradBuffer{1.0f};

  const auto& records = tape.records();
  std::vector<GradBuffer*> grad_in;
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    auto out_it = result.grads_.find(it->output.id());
    if (out_it == result.grads_.end()) continue;
    // Element references survive rehashing, so this stays valid below.
    const GradBuffer& grad_out = out_it->second;

    grad_in.assign(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const Tensor& in = it->inputs[i];
      if (!in.requires_grad()) continue;
      auto [slot, inserted] = result.grads_.try_emplace(in.id());
      if (inserted) slot->second.assign(in.numel(), 0.0f);
    }
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const Tensor& in = it->inputs[i];
      if (in.requires_grad()) grad_in[i] = &result.grads_.at(in.id());
    }
    it->backward(grad_out, grad_in);
  }
  return result;
}

}  // namespace daft
