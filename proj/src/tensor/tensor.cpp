#include "daft/tensor.hpp"

#include <atomic>
#include <cstring>
#include <sstream>

namespace daft {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::uint64_t Tensor::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values but " +
                     std::to_string(data.size()) + " were given");
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->storage = std::make_shared<std::vector<float>>(std::move(data));
  impl_->requires_grad = requires_grad;
  impl_->id = next_id();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("tensor: axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().storage->size(); }

std::span<const float> Tensor::data() const { return *impl().storage; }

std::span<float> Tensor::mutable_data() {
  impl();
  return *impl_->storage;
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return data()[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
std::uint64_t Tensor::id() const { return impl().id; }

Tensor Tensor::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>(impl());
  out.impl_->requires_grad = false;
  out.impl_->id = next_id();
  return out;
}

Tensor Tensor::clone(bool requires_grad) const {
  std::vector<float> copy(data().begin(), data().end());
  return Tensor(shape(), std::move(copy), requires_grad);
}

Tensor Tensor::view_as(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("view_as: cannot view " + shape_str(this->shape()) + " as " + shape_str(shape));
  }
  Tensor out = detach();
  out.impl_->shape = std::move(shape);
  return out;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (!defined() || !other.defined()) return defined() == other.defined();
  if (shape() != other.shape()) return false;
  return std::memcmp(data().data(), other.data().data(), numel() * sizeof(float)) == 0;
}

}  // namespace daft
