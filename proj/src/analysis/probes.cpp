#include "daft/analysis/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "daft/analysis/metrics.hpp"
#include "daft/analysis/stats.hpp"
#include "daft/random.hpp"

namespace daft::analysis {

const std::vector<double>& FeatureProbe::of(const std::string& attribute) const {
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    if (attributes[a] == attribute) return r[a];
  }
  throw std::invalid_argument("FeatureProbe: no attribute named '" + attribute + "'");
}

std::vector<bool> FeatureProbe::shape_dominant(const std::string& shape, const std::string& color,
                                               double threshold) const {
  const auto& rs = of(shape);
  const auto& rc = of(color);
  std::vector<bool> out(num_features());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::abs(rs[i]) >= threshold && std::abs(rs[i]) > std::abs(rc[i]);
  }
  return out;
}

std::vector<bool> FeatureProbe::color_dominant(const std::string& shape, const std::string& color) const {
  const auto& rs = of(shape);
  const auto& rc = of(color);
  std::vector<bool> out(num_features());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = !zero_variance[i] && std::abs(rc[i]) >= std::abs(rs[i]);
  return out;
}

FeatureProbe feature_correlations(const Tensor& features, std::span<const Attribute> attributes) {
  if (features.rank() != 2) throw ShapeError("feature_correlations: expected (N, F), got " + shape_str(features.shape()));
  const std::size_t n = features.dim(0), f = features.dim(1);
  FeatureProbe probe;
  probe.zero_variance.assign(f, false);
  std::vector<double> column(n);
  for (const auto& attr : attributes) {
    if (attr.values.size() != n) {
      throw ShapeError("feature_correlations: attribute '" + attr.name + "' has " + std::to_string(attr.values.size()) +
                       " values for " + std::to_string(n) + " examples");
    }
    probe.attributes.push_back(attr.name);
    auto& row = probe.r.emplace_back(f, 0.0);
    for (std::size_t j = 0; j < f; ++j) {
      for (std::size_t i = 0; i < n; ++i) column[i] = features.data()[i * f + j];
      const auto r = pearson(column, attr.values);
      row[j] = r.value;
      if (r.degenerate && sample_std(column) == 0.0) probe.zero_variance[j] = true;
    }
  }
  return probe;
}

FeatureProbe feature_correlations(const nn::Model& model, const data::DomainDataset& ds,
                                  std::span<const Attribute> attributes) {
  return feature_correlations(dataset_features(model, ds), attributes);
}

std::vector<Attribute> colored_attributes(const data::DomainDataset& ds) {
  if (ds.color_t.size() != ds.size()) throw std::invalid_argument("colored_attributes: dataset carries no color parameter");
  Attribute shape{"shape", {}}, color{"color", {}};
  shape.values.assign(ds.labels.begin(), ds.labels.end());
  color.values.assign(ds.color_t.begin(), ds.color_t.end());
  return {std::move(shape), std::move(color)};
}

std::vector<double> head_feature_weight(const nn::Head& head) {
  const std::size_t f = head.weight.dim(0), c = head.weight.dim(1);
  std::vector<double> out(f);
  for (std::size_t i = 0; i < f; ++i) {
    const auto row = head.weight.data().subspan(i * c, c);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    out[i] = static_cast<double>(*hi) - static_cast<double>(*lo);
  }
  return out;
}

std::size_t count_used_features(const std::vector<bool>& mask, const nn::Head& head) {
  const auto w = head_feature_weight(head);
  if (mask.size() != w.size()) throw ShapeError("count_used_features: mask does not match the head's feature count");
  auto sorted = w;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) count += mask[i] && w[i] > median;
  return count;
}

RapResult rap(const nn::Model& model, const nn::Head& head, const data::DomainDataset& ds,
              const adversary::PerturbConfig& cfg) {
  if (ds.size() == 0) throw std::invalid_argument("rap: empty dataset");
  const std::size_t f = model.arch().feature_dim;
  std::vector<double> sums(f, 0.0);
  std::vector<std::size_t> counts(f, 0);
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0, c = 0; start < ds.size(); start += chunk, ++c) {
    std::vector<std::size_t> rows(std::min(chunk, ds.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor x = ds.gather_images(rows);
    auto pcfg = cfg;
    pcfg.seed = derive_seed(cfg.seed, c);
    const auto res = adversary::perturb_point(model, head, x, ds.gather_labels(rows), adversary::LossKind::cross_entropy,
                                              pcfg);
    const Tensor clean = model.features(x, nn::ParamGroup::none);
    const Tensor moved =
        cfg.space == adversary::Space::input ? model.features(res.point, nn::ParamGroup::none) : res.point;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double base = clean.data()[i * f + j];
        if (std::abs(base) < 1e-8) continue;
        sums[j] += std::abs(static_cast<double>(moved.data()[i * f + j]) - base) / std::abs(base);
        ++counts[j];
      }
    }
  }
  RapResult out;
  out.values.resize(f);
  out.excluded.resize(f);
  for (std::size_t j = 0; j < f; ++j) {
    out.values[j] = counts[j] ? sums[j] / static_cast<double>(counts[j]) : 0.0;
    out.excluded[j] = ds.size() - counts[j];
  }
  return out;
}

}  // namespace daft::analysis
