#include "daft/analysis/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "daft/analysis/stats.hpp"

namespace daft::analysis {

namespace {

constexpr std::size_t kChunk = 256;

template <class Fn>
Tensor chunked_rows(const data::DomainDataset& ds, Fn fn) {
  if (ds.size() == 0) throw std::invalid_argument("evaluation on an empty dataset");
  std::vector<float> out;
  std::size_t cols = 0;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    std::vector<std::size_t> rows(std::min(kChunk, ds.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor y = fn(ds.gather_images(rows));
    cols = y.dim(1);
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return Tensor({ds.size(), cols}, std::move(out));
}

// Class indices of the k largest entries; ties favor the lower index.
std::vector<std::size_t> top_k(std::span<const float> row, std::size_t k) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] > row[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": logits must be equal (N, C) matrices, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
}

}  // namespace

Tensor dataset_logits(const nn::Model& model, const data::DomainDataset& ds) {
  return dataset_logits(model, model.head(), ds);
}

Tensor dataset_logits(const nn::Model& model, const nn::Head& head, const data::DomainDataset& ds) {
  return chunked_rows(ds, [&](const Tensor& x) {
    return nn::logits_from_features(head, model.features(x, nn::ParamGroup::none), false);
  });
}

Tensor dataset_features(const nn::Model& model, const data::DomainDataset& ds) {
  return chunked_rows(ds, [&](const Tensor& x) { return model.features(x, nn::ParamGroup::none); });
}

std::vector<std::uint32_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected (N, C), got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::uint32_t> out(n);
  auto d = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = d.subspan(i * c, c);
    out[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Tensor& logits, std::span<const std::uint32_t> labels) {
  const auto pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw ShapeError("accuracy: label count does not match logits");
  if (pred.empty()) throw std::invalid_argument("accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double accuracy(const nn::Model& model, const data::DomainDataset& ds) {
  return accuracy(dataset_logits(model, ds), ds.labels_u32());
}

double prec_at_k(const Tensor& logits_a, const Tensor& logits_b, std::size_t k) {
  check_pair(logits_a, logits_b, "prec_at_k");
  const std::size_t n = logits_a.dim(0), c = logits_a.dim(1);
  if (k < 1 || k > c) {
    throw std::invalid_argument("prec_at_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(c) + "]");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ta = top_k(logits_a.data().subspan(i * c, c), k);
    const auto tb = top_k(logits_b.data().subspan(i * c, c), k);
    std::vector<std::size_t> common;
    std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
    total += static_cast<double>(common.size()) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

double mean_logit_spearman(const Tensor& logits_a, const Tensor& logits_b) {
  check_pair(logits_a, logits_b, "mean_logit_spearman");
  const std::size_t n = logits_a.dim(0), c = logits_a.dim(1);
  double total = 0.0;
  std::vector<double> u(c), v(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      u[j] = logits_a.data()[i * c + j];
      v[j] = logits_b.data()[i * c + j];
    }
    total += spearman(u, v).value;
  }
  return total / static_cast<double>(n);
}

void MetricsRecord::validate() const {
  auto bad = [](double a) { return !(a >= 0.0 && a <= 1.0); };
  if (bad(ood_accuracy)) throw std::invalid_argument("MetricsRecord: OOD accuracy outside [0,1]");
  for (const auto& [d, a] : id_accuracy) {
    if (bad(a)) throw std::invalid_argument("MetricsRecord: ID accuracy of domain " + std::to_string(d) + " outside [0,1]");
  }
}

std::string to_json_line(const MetricEvent& e) {
  nlohmann::ordered_json j;
  j["run_id"] = e.run_id;
  j["stage"] = e.stage;
  j["step"] = e.step;
  j["split"] = e.split;
  if (e.domain < 0) {
    j["domain"] = nullptr;
  } else {
    j["domain"] = e.domain;
  }
  j["metric"] = e.metric;
  j["value"] = e.value;
  return j.dump();
}

std::string to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["pipeline"] = r.pipeline;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  auto& id = j["id_accuracy"] = nlohmann::ordered_json::object();
  for (const auto& [d, a] : r.id_accuracy) id[std::to_string(d)] = a;
  j["ood_accuracy"] = r.ood_accuracy;
  j["losses"] = r.losses;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

}  // namespace daft::analysis
