#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "daft/tensor.hpp"

namespace daft {

using GradBuffer = std::vector<float>;

/// Propagates `grad_out` into the input buffers. Entries of `grad_in` are
/// null for inputs that do not require gradients.
using BackwardFn =
    std::function<void(std::span<const float> grad_out, std::span<GradBuffer* const> grad_in)>;

/// Ordered record of differentiable ops executed while the tape is active.
///
/// Constructing a Tape makes it the active tape of the calling thread; the
/// destructor restores the previous one. Ops record themselves only when an
/// input requires gradients and a tape is active, so code running with no
/// tape (evaluation, PGD bookkeeping) builds no graph.
class Tape {
 public:
  struct Record {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::string op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);
  bool contains(const Tensor& t) const;
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<Record> records_;
  std::unordered_map<std::uint64_t, std::size_t> produced_by_;
  Tape* previous_ = nullptr;
};

/// Gradient map returned by `backward`.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `t`; zeros when `t` was not reached.
  Tensor of(const Tensor& t) const;
  bool reached(const Tensor& t) const { return grads_.count(t.id()) != 0; }

 private:
  friend Gradients backward(const Tensor& loss, const Tape& tape);
  std::unordered_map<std::uint64_t, GradBuffer> grads_;
};

/// Reverse-mode sweep from a scalar `loss` recorded on `tape`.
Gradients backward(const Tensor& loss, const Tape& tape);

}  // namespace daft
