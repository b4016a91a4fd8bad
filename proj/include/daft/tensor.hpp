#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace daft {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes do not conform for an op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op or update produces NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 array with optional gradient tracking.
///
/// A Tensor is a cheap handle. Copies share storage; values are treated as
/// immutable except through `mutable_data()`, which is reserved for optimizer
/// updates and data construction. Every handle created by construction,
/// `detach()` or `clone()` carries a fresh identity used as the key for
/// gradients on a Tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  std::uint64_t id() const;

  /// Same storage, no gradient tracking, new identity.
  Tensor detach() const;
  /// Deep copy with a new identity.
  Tensor clone(bool requires_grad = false) const;
  /// Shared storage reinterpreted with a new shape (no tracking).
  Tensor view_as(Shape shape) const;

  /// True when shape and every stored bit match.
  bool bit_equal(const Tensor& other) const;

 private:
  struct Impl {
    Shape shape;
    std::shared_ptr<std::vector<float>> storage;
    bool requires_grad = false;
    std::uint64_t id = 0;
  };
  std::shared_ptr<Impl> impl_;

  static std::uint64_t next_id();
  const Impl& impl() const;
};

}  // namespace daft
