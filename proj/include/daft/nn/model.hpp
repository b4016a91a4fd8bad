#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daft/tensor.hpp"

namespace daft::nn {

enum class ArchKind { identity, linear, mlp, small_cnn };

/// Layer layout of a feature extractor plus linear head.
///
/// Text form (stored in checkpoints and configs):
///   identity:<in>:<classes>
///   linear:<in>:<feature>:<classes>
///   mlp:<in>:<h1>,<h2>,...:<classes>              (feature_dim = last width)
///   cnn:<C>x<H>x<W>:<c1>,<c2>:<feature>:<classes>
struct Architecture {
  ArchKind kind = ArchKind::identity;
  Shape input;                      // per-example shape
  std::vector<std::size_t> widths;  // MLP hidden widths or CNN conv channels
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  static Architecture identity(std::size_t in, std::size_t classes);
  static Architecture linear(std::size_t in, std::size_t feature, std::size_t classes);
  static Architecture mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes);
  static Architecture small_cnn(Shape chw, std::vector<std::size_t> channels, std::size_t feature,
                                std::size_t classes);

  std::size_t input_numel() const { return shape_numel(input); }
  std::string to_string() const;
  static Architecture parse(const std::string& text);
  bool operator==(const Architecture&) const = default;
};

/// Which parameter groups a forward pass exposes to gradient tracking.
enum class ParamGroup { all, extractor, head, none };

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Mutable reference handed to optimizers.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

/// Final linear layer: logits = f W + b, W of shape (feature_dim, num_classes).
struct Head {
  Tensor weight;
  Tensor bias;

  Head clone() const { return {weight.clone(true), bias.clone(true)}; }
};

Tensor logits_from_features(const Head& head, const Tensor& features, bool track = true);

/// Feature extractor f_theta followed by a linear head.
///
/// Copying a Model deep-copies every tensor, so models behave as values and
/// optimizer updates never leak across copies.
class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// He-style fan-in scaled Gaussian weights, zero biases.
  static Model init(const Architecture& arch, std::uint64_t seed);
  /// Assemble from explicit tensors (checkpoint loading); validates shapes.
  static Model from_tensors(const Architecture& arch, std::vector<NamedTensor> tensors);

  const Architecture& arch() const { return arch_; }
  const std::vector<NamedTensor>& extractor() const { return extractor_; }
  std::vector<NamedTensor>& extractor() { return extractor_; }
  const Head& head() const { return head_; }
  Head& head() { return head_; }
  void set_head(Head head);

  /// f_theta(x), shape (batch, feature_dim).
  Tensor features(const Tensor& x, ParamGroup group = ParamGroup::all) const;
  Tensor logits(const Tensor& x, ParamGroup group = ParamGroup::all) const;

  std::vector<ParamRef> parameters(ParamGroup group);
  /// Extractor tensors then head tensors, in checkpoint order.
  std::vector<NamedTensor> named_tensors() const;

 private:
  Architecture arch_;
  std::vector<NamedTensor> extractor_;
  Head head_;
};

/// Expected (name, shape) list for an architecture, extractor first.
std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch);

/// FNV-1a over the raw bits of every extractor tensor.
std::uint64_t extractor_hash(const Model& model);

}  // namespace daft::nn
