#pragma once

#include <span>
#include <string>
#include <vector>

#include "daft/adversary.hpp"
#include "daft/data/dataset.hpp"
#include "daft/nn/model.hpp"

namespace daft::analysis {

/// A named per-example series aligned with a dataset (shape code, color t, label).
struct Attribute {
  std::string name;
  std::vector<double> values;
};

/// Pearson correlation of every feature with every attribute.
struct FeatureProbe {
  std::vector<std::string> attributes;
  std::vector<std::vector<double>> r;  // r[attribute][feature]
  std::vector<bool> zero_variance;     // per feature; its correlations are 0 by convention

  std::size_t num_features() const { return zero_variance.size(); }
  const std::vector<double>& of(const std::string& attribute) const;

  /// Features whose |r| with `shape` reaches `threshold` and exceeds |r| with `color`.
  std::vector<bool> shape_dominant(const std::string& shape, const std::string& color, double threshold = 0.7) const;
  /// Features whose |r| with `color` is at least their |r| with `shape`.
  std::vector<bool> color_dominant(const std::string& shape, const std::string& color) const;
};

/// features: (N, F). Every attribute must hold N values.
FeatureProbe feature_correlations(const Tensor& features, std::span<const Attribute> attributes);
FeatureProbe feature_correlations(const nn::Model& model, const data::DomainDataset& ds,
                                  std::span<const Attribute> attributes);

/// The probe attributes of a colored dataset: "shape" (label) and "color" (t).
std::vector<Attribute> colored_attributes(const data::DomainDataset& ds);

/// How strongly a head separates classes through each feature: max minus min
/// of the feature's weight row.
std::vector<double> head_feature_weight(const nn::Head& head);

/// Number of features flagged in `mask` whose head weight exceeds the median head weight.
std::size_t count_used_features(const std::vector<bool>& mask, const nn::Head& head);

struct RapResult {
  std::vector<double> values;            // per feature
  std::vector<std::size_t> excluded;     // examples skipped per feature (|f_i(x)| < 1e-8)
};

/// Relative average perturbation E|f_i(x+δ) − f_i(x)| / |f_i(x)| with δ the
/// cross-entropy PGD point of `head` under cfg. space=input perturbs images and
/// re-extracts features; space=feature perturbs the features directly.
RapResult rap(const nn::Model& model, const nn::Head& head, const data::DomainDataset& ds,
              const adversary::PerturbConfig& cfg);

}  // namespace daft::analysis
