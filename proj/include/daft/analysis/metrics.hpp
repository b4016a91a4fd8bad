#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "daft/data/dataset.hpp"
#include "daft/nn/model.hpp"

namespace daft::analysis {

/// Logits of every row of `ds`, evaluated in chunks without recording.
Tensor dataset_logits(const nn::Model& model, const data::DomainDataset& ds);
/// Same, but through `head` on top of the model's extractor.
Tensor dataset_logits(const nn::Model& model, const nn::Head& head, const data::DomainDataset& ds);
/// Features (N, feature_dim) of every row of `ds`.
Tensor dataset_features(const nn::Model& model, const data::DomainDataset& ds);

/// Row argmax; ties go to the lower class index.
std::vector<std::uint32_t> argmax_rows(const Tensor& logits);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const std::uint32_t> labels);
double accuracy(const nn::Model& model, const data::DomainDataset& ds);

/// Top-k overlap |topk(a) ∩ topk(b)| / k averaged over rows.
double prec_at_k(const Tensor& logits_a, const Tensor& logits_b, std::size_t k);

/// Mean over rows of the Spearman correlation between logit vectors.
double mean_logit_spearman(const Tensor& logits_a, const Tensor& logits_b);

/// Outcome of one trained model, as persisted by the harness.
struct MetricsRecord {
  std::string run_id;
  std::string pipeline;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::uint16_t, double> id_accuracy;  // per training domain, 20% split
  double ood_accuracy = 0.0;
  std::vector<float> losses;
  double wall_seconds = 0.0;

  void validate() const;
};

/// One evaluation event of the JSON-lines metrics stream.
struct MetricEvent {
  std::string run_id;
  std::string stage;
  std::size_t step = 0;
  std::string split;
  int domain = -1;  // -1 when the event spans several domains
  std::string metric;
  double value = 0.0;
};

std::string to_json_line(const MetricEvent& e);
std::string to_json(const MetricsRecord& r);

}  // namespace daft::analysis
