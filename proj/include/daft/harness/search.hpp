#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "daft/data/dataset.hpp"
#include "daft/pipelines.hpp"

namespace daft::harness {

enum class RangeKind { log_uniform_real, uniform_real, integer_range };

struct HyperRange {
  std::string name;
  RangeKind kind = RangeKind::uniform_real;
  double lo = 0.0;
  double hi = 0.0;

  /// Real range; log-uniform when it spans at least two decades.
  static HyperRange real(std::string name, double lo, double hi);
  /// Inclusive integer range.
  static HyperRange integer(std::string name, std::int64_t lo, std::int64_t hi);
  void validate() const;
};

/// Named hyperparameter values of one configuration.
using HyperConfig = std::map<std::string, double>;

/// Search ranges: lr, epsilon, pgd_steps, pgd_lr, temperature, alpha.
std::vector<HyperRange> default_ranges();

/// n independent seeded draws from `ranges`.
std::vector<HyperConfig> sample_configs(std::span<const HyperRange> ranges, std::size_t n, std::uint64_t seed);

/// Overwrite the fields of `cfg` named in `h` (lr, epsilon, pgd_steps, pgd_lr,
/// temperature, alpha); unknown names are an error.
void apply_hyper(const HyperConfig& h, pipelines::TrainConfig& cfg);

std::string to_string(const HyperConfig& h);

struct SplitAccess {
  std::uint16_t domain;
  data::SplitTag split;
};

/// Read-only dataset view that logs every (domain, split) slice handed out,
/// so a protocol can be checked for forbidden reads.
class AuditedData {
 public:
  explicit AuditedData(const data::DomainDataset& ds) : ds_(&ds) {}

  data::DomainDataset view(std::span<const std::uint16_t> domains, data::SplitTag split) const;
  std::vector<std::uint16_t> domain_ids() const { return ds_->domain_ids(); }

  std::vector<SplitAccess> log() const;
  bool touched(std::uint16_t domain, data::SplitTag split) const;
  void clear_log() const;

 private:
  const data::DomainDataset* ds_;
  mutable std::mutex mu_;
  mutable std::vector<SplitAccess> log_;
};

/// A trained classifier, reduced to "accuracy on this dataset".
using Classifier = std::function<double(const data::DomainDataset&)>;
/// Trains `algorithm` with hyperparameters `h` on `train` under `seed`.
using TrainFn = std::function<Classifier(const std::string& algorithm, const HyperConfig& h,
                                         const data::DomainDataset& train, std::uint64_t seed)>;

struct SelectionTable {
  std::vector<std::uint16_t> folds;         // validation domain of each column
  std::vector<std::vector<double>> scores;  // [config][fold]; NaN marks a failed cell
  std::vector<std::string> errors;          // per config, empty when every cell ran
  std::vector<double> mean;                 // NaN for failed configs
  std::size_t best = 0;

  bool failed(std::size_t config) const { return !errors[config].empty(); }
  std::string to_csv() const;
};

/// Runs `jobs` independent tasks on at most `workers` threads.
void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& job);

/// For every config, trains one model per training domain left out (on the
/// 80% splits of the others), scores it on the left-out domain's 20% split and
/// averages. Argmax of the means; ties go to the lowest index. Failed configs
/// are excluded; throws when all fail.
SelectionTable leave_one_domain_out_select(const AuditedData& data, std::span<const std::uint16_t> train_domains,
                                           const std::string& algorithm, std::span<const HyperConfig> configs,
                                           const TrainFn& train, std::uint64_t seed, std::size_t workers = 1);

/// Scores every config trained on the 80% splits of `train_domains` against a
/// validation set drawn from the target domain (its 80% split, which is
/// disjoint from the 20% split used for final evaluation).
SelectionTable oracle_select(const AuditedData& data, std::span<const std::uint16_t> train_domains,
                             std::uint16_t target, const std::string& algorithm, std::span<const HyperConfig> configs,
                             const TrainFn& train, std::uint64_t seed, std::size_t workers = 1);

}  // namespace daft::harness
