#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "daft/analysis/stats.hpp"
#include "daft/harness/config.hpp"
#include "daft/harness/search.hpp"

namespace daft::harness {

enum class Selection { leave_one_domain_out, oracle };

std::string to_string(Selection s);
Selection parse_selection(const std::string& s);  // "lodo" | "oracle"

struct ExperimentPlan {
  std::string name = "experiment";
  std::vector<std::string> algorithms;
  std::vector<std::uint16_t> domains;
  std::vector<std::uint16_t> holdouts;  // empty: every domain in turn
  std::size_t n_configs = 8;            // 32 under the paper protocol
  std::size_t n_seeds = 5;
  Selection selection = Selection::leave_one_domain_out;
  std::vector<HyperRange> ranges = default_ranges();
  std::uint64_t seed = 0;
  /// Algorithm pairs compared with paired t-tests over seeds.
  std::vector<std::pair<std::string, std::string>> comparisons;
  std::size_t workers = 1;

  void validate() const;
  std::vector<std::uint16_t> holdout_domains() const;
};

/// One (algorithm, holdout) cell of the final table.
struct ExperimentCell {
  std::string algorithm;
  std::uint16_t holdout = 0;
  std::size_t selected = 0;
  HyperConfig config;
  std::vector<double> ood;  // per seed; NaN where the run failed
  std::vector<double> id;
  double ood_mean = 0.0, ood_std = 0.0;
  double id_mean = 0.0, id_std = 0.0;
  std::vector<std::string> errors;
};

struct Comparison {
  std::string a, b;
  std::uint16_t holdout = 0;
  analysis::TTestResult test;
  bool significant = false;  // p < 0.05
  bool complete = true;      // false when a seed failed on either side
};

struct ExperimentReport {
  std::string plan_name;
  std::vector<ExperimentCell> cells;
  std::vector<Comparison> comparisons;
  std::vector<SelectionTable> selections;  // same order as cells

  const ExperimentCell& cell(const std::string& algorithm, std::uint16_t holdout) const;
  /// Deterministic documents: no timestamps or wall-clock values.
  std::string to_json() const;
  std::string to_markdown() const;
};

/// Selects a config per (algorithm, holdout) with the plan's protocol, retrains
/// it with n_seeds seeds on the 80% splits of the other domains, and scores ID
/// (their 20% splits) and OOD (the holdout's 20% split). When `out_dir` is not
/// empty, the plan, selection tables, per-run records and the report are
/// written there.
ExperimentReport run_experiment(const ExperimentPlan& plan, const AuditedData& data, const TrainFn& train,
                                const std::string& out_dir = "");

/// Algorithms understood by pipeline_trainer.
const std::vector<std::string>& known_algorithms();

/// Real training backend: each algorithm runs its pipeline from `base`, with
/// the tuned hyperparameters applied to the stage the algorithm adds.
TrainFn pipeline_trainer(const RunConfig& base);

}  // namespace daft::harness
