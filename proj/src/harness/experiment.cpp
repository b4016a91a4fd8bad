#include "daft/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include "json.hpp"
#include "daft/analysis/metrics.hpp"
#include "daft/random.hpp"

namespace daft::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

// Mean and sample std over the finite entries.
std::pair<double, double> summarize(const std::vector<double>& v) {
  std::vector<double> ok;
  for (double x : v) {
    if (std::isfinite(x)) ok.push_back(x);
  }
  if (ok.empty()) return {kNaN, kNaN};
  return {analysis::mean(ok), analysis::sample_std(ok)};
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::string pct(double v) {
  if (!std::isfinite(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string to_string(Selection s) { return s == Selection::oracle ? "oracle" : "lodo"; }

Selection parse_selection(const std::string& s) {
  if (s == "lodo") return Selection::leave_one_domain_out;
  if (s == "oracle") return Selection::oracle;
  throw ConfigError("unknown selection '" + s + "' (expected lodo|oracle)");
}

void ExperimentPlan::validate() const {
  if (algorithms.empty()) throw ConfigError("plan '" + name + "': no algorithms");
  if (n_configs < 1) throw ConfigError("plan '" + name + "': n_configs must be at least 1");
  if (n_seeds < 1) throw ConfigError("plan '" + name + "': n_seeds must be at least 1");
  if (domains.size() < 2) throw ConfigError("plan '" + name + "': need at least 2 domains");
  const std::size_t min_train = selection == Selection::leave_one_domain_out ? 2 : 1;
  if (domains.size() - 1 < min_train) {
    throw ConfigError("plan '" + name + "': leave-one-domain-out needs at least 2 training domains per holdout");
  }
  for (auto h : holdouts) {
    if (std::find(domains.begin(), domains.end(), h) == domains.end()) {
      throw ConfigError("plan '" + name + "': holdout " + std::to_string(h) + " is not one of the domains");
    }
  }
  for (const auto& [a, b] : comparisons) {
    for (const auto& x : {a, b}) {
      if (std::find(algorithms.begin(), algorithms.end(), x) == algorithms.end()) {
        throw ConfigError("plan '" + name + "': comparison names unknown algorithm '" + x + "'");
      }
    }
  }
  for (const auto& r : ranges) r.validate();
}

std::vector<std::uint16_t> ExperimentPlan::holdout_domains() const { return holdouts.empty() ? domains : holdouts; }

const ExperimentCell& ExperimentReport::cell(const std::string& algorithm, std::uint16_t holdout) const {
  for (const auto& c : cells) {
    if (c.algorithm == algorithm && c.holdout == holdout) return c;
  }
  throw std::out_of_range("no cell for " + algorithm + " / holdout " + std::to_string(holdout));
}

std::string ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  j["plan"] = plan_name;
  auto& cs = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json e;
    e["algorithm"] = c.algorithm;
    e["holdout"] = c.holdout;
    e["selected_config"] = c.selected;
    auto& h = e["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : c.config) h[k] = v;
    auto& ood = e["ood"] = nlohmann::ordered_json::array();
    for (double v : c.ood) ood.push_back(number_or_null(v));
    auto& id = e["id"] = nlohmann::ordered_json::array();
    for (double v : c.id) id.push_back(number_or_null(v));
    e["ood_mean"] = number_or_null(c.ood_mean);
    e["ood_std"] = number_or_null(c.ood_std);
    e["id_mean"] = number_or_null(c.id_mean);
    e["id_std"] = number_or_null(c.id_std);
    e["errors"] = c.errors;
    cs.push_back(std::move(e));
  }
  auto& ts = j["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& t : comparisons) {
    nlohmann::ordered_json e;
    e["a"] = t.a;
    e["b"] = t.b;
    e["holdout"] = t.holdout;
    e["t"] = number_or_null(t.test.t);
    e["p"] = number_or_null(t.test.p);
    e["degenerate"] = t.test.degenerate;
    e["significant"] = t.significant;
    e["complete"] = t.complete;
    ts.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string ExperimentReport::to_markdown() const {
  std::string out = "# " + plan_name + "\n\n| algorithm | holdout | OOD % (mean ± std) | ID % (mean ± std) | seeds failed |\n";
  out += "|---|---|---|---|---|\n";
  for (const auto& c : cells) {
    const auto failed = std::count_if(c.ood.begin(), c.ood.end(), [](double v) { return !std::isfinite(v); });
    out += "| " + c.algorithm + " | " + std::to_string(c.holdout) + " | " + pct(c.ood_mean) + " ± " + pct(c.ood_std) +
           " | " + pct(c.id_mean) + " ± " + pct(c.id_std) + " | " + std::to_string(failed) + " |\n";
  }
  if (!comparisons.empty()) {
    out += "\n| a | b | holdout | t | p | significant |\n|---|---|---|---|---|---|\n";
    for (const auto& t : comparisons) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%.4f | %.4g", t.test.t, t.test.p);
      out += "| " + t.a + " | " + t.b + " | " + std::to_string(t.holdout) + " | " + buf + " | " +
             (t.significant ? "yes" : "no") + (t.complete ? "" : " (gaps)") + (t.test.degenerate ? " (degenerate)" : "") +
             " |\n";
    }
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const AuditedData& data, const TrainFn& train,
                                const std::string& out_dir) {
  plan.validate();
  const bool persist = !out_dir.empty();
  const std::filesystem::path root(out_dir);
  if (persist) std::filesystem::create_directories(root);

  const auto configs = sample_configs(plan.ranges, plan.n_configs, derive_seed(plan.seed, 0x636f6e66ULL));
  ExperimentReport report;
  report.plan_name = plan.name;
  std::string records, events;

  for (auto holdout : plan.holdout_domains()) {
    std::vector<std::uint16_t> train_domains;
    for (auto d : plan.domains) {
      if (d != holdout) train_domains.push_back(d);
    }
    for (std::size_t ai = 0; ai < plan.algorithms.size(); ++ai) {
      const auto& algo = plan.algorithms[ai];
      const std::uint64_t select_seed = derive_seed(plan.seed, 0x73656c00ULL + holdout * 64 + ai);
      auto table = plan.selection == Selection::leave_one_domain_out
                       ? leave_one_domain_out_select(data, train_domains, algo, configs, train, select_seed, plan.workers)
                       : oracle_select(data, train_domains, holdout, algo, configs, train, select_seed, plan.workers);

      ExperimentCell cell;
      cell.algorithm = algo;
      cell.holdout = holdout;
      cell.selected = table.best;
      cell.config = configs[table.best];
      cell.ood.assign(plan.n_seeds, kNaN);
      cell.id.assign(plan.n_seeds, kNaN);
      cell.errors.assign(plan.n_seeds, "");
      std::vector<analysis::MetricsRecord> recs(plan.n_seeds);

      const auto train_set = data.view(train_domains, data::SplitTag::train80);
      const auto ood_set = data.view(std::span(&holdout, 1), data::SplitTag::eval20);
      std::vector<data::DomainDataset> id_sets;
      for (auto d : train_domains) id_sets.push_back(data.view(std::span(&d, 1), data::SplitTag::eval20));
      const auto id_all = data.view(train_domains, data::SplitTag::eval20);

      std::mutex mu;
      run_parallel(plan.n_seeds, plan.workers, [&](std::size_t s) {
        // Seeds are shared across algorithms so t-tests pair like with like.
        const std::uint64_t seed = derive_seed(plan.seed, s);
        auto& r = recs[s];
        r.pipeline = algo;
        r.seed = seed;
        r.run_id = algo + "-h" + std::to_string(holdout) + "-s" + std::to_string(s);
        r.config_hash = to_string(cell.config);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const auto model = train(algo, cell.config, train_set, seed);
          const double ood = model(ood_set), id = model(id_all);
          for (std::size_t k = 0; k < train_domains.size(); ++k) r.id_accuracy[train_domains[k]] = model(id_sets[k]);
          r.ood_accuracy = ood;
          r.validate();
          std::lock_guard lock(mu);
          cell.ood[s] = ood;
          cell.id[s] = id;
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          cell.errors[s] = e.what();
        }
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      });
      std::tie(cell.ood_mean, cell.ood_std) = summarize(cell.ood);
      std::tie(cell.id_mean, cell.id_std) = summarize(cell.id);

      for (std::size_t s = 0; s < plan.n_seeds; ++s) {
        if (!cell.errors[s].empty()) continue;
        records += analysis::to_json(recs[s]) + "\n";
        events += analysis::to_json_line({recs[s].run_id, "final", 0, "eval20", holdout, "ood_accuracy", cell.ood[s]}) + "\n";
        for (const auto& [d, a] : recs[s].id_accuracy) {
          events += analysis::to_json_line({recs[s].run_id, "final", 0, "eval20", d, "id_accuracy", a}) + "\n";
        }
      }
      if (persist) {
        write_text(root / ("selection_" + algo + "_holdout" + std::to_string(holdout) + ".csv"), table.to_csv());
      }
      report.cells.push_back(std::move(cell));
      report.selections.push_back(std::move(table));
    }

    for (const auto& [a, b] : plan.comparisons) {
      const auto& ca = report.cell(a, holdout);
      const auto& cb = report.cell(b, holdout);
      Comparison cmp{a, b, holdout, {}, false, true};
      std::vector<double> xa, xb;
      for (std::size_t s = 0; s < plan.n_seeds; ++s) {
        if (std::isfinite(ca.ood[s]) && std::isfinite(cb.ood[s])) {
          xa.push_back(ca.ood[s]);
          xb.push_back(cb.ood[s]);
        } else {
          cmp.complete = false;
        }
      }
      if (xa.size() >= 2) {
        cmp.test = analysis::paired_ttest(xa, xb);
        cmp.significant = cmp.test.p < 0.05;
      } else {
        cmp.test = {kNaN, kNaN, true};
        cmp.complete = false;
      }
      report.comparisons.push_back(cmp);
    }
  }

  if (persist) {
    std::string plan_text = "name = " + plan.name + "\nselection = " + to_string(plan.selection) +
                            "\nn_configs = " + std::to_string(plan.n_configs) + "\nn_seeds = " +
                            std::to_string(plan.n_seeds) + "\nseed = " + std::to_string(plan.seed) + "\nalgorithms =";
    for (const auto& a : plan.algorithms) plan_text += " " + a;
    plan_text += "\ndomains =";
    for (auto d : plan.domains) plan_text += " " + std::to_string(d);
    plan_text += "\n\n# sampled configurations\n";
    for (std::size_t i = 0; i < configs.size(); ++i) plan_text += std::to_string(i) + ": " + to_string(configs[i]) + "\n";
    write_text(root / "plan.txt", plan_text);
    write_text(root / "records.jsonl", records);
    write_text(root / "metrics.jsonl", events);
    write_text(root / "report.json", report.to_json());
    write_text(root / "report.md", report.to_markdown());
  }
  return report;
}

const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> names = {"erm", "at", "trades", "af", "af-smooth", "distill", "daft-single", "daft"};
  return names;
}

TrainFn pipeline_trainer(const RunConfig& base) {
  return [base](const std::string& algo, const HyperConfig& h, const data::DomainDataset& train,
                std::uint64_t seed) -> Classifier {
    auto cfg = base.daft;
    cfg.seed = seed;
    cfg.teacher.seed = derive_seed(seed, 1);
    cfg.finetune.seed = derive_seed(seed, 2);
    cfg.distill.seed = derive_seed(seed, 3);
    auto wrap = [](nn::Model m) -> Classifier {
      auto shared = std::make_shared<nn::Model>(std::move(m));
      return [shared](const data::DomainDataset& ds) { return analysis::accuracy(*shared, ds); };
    };
    auto teacher = [&] {
      return pipelines::train_erm(nn::Model::init(cfg.teacher_arch, pipelines::teacher_init_seed(seed)), train,
                                  cfg.teacher)
          .model;
    };
    // Distillation-stage keys go to the distill stage; the rest to fine-tuning.
    auto split_hyper = [&](pipelines::TrainConfig& ft, pipelines::TrainConfig& ds) {
      HyperConfig a, b;
      for (const auto& [k, v] : h) (k == "temperature" || k == "lr" ? b : a)[k] = v;
      apply_hyper(a, ft);
      apply_hyper(b, ds);
    };

    if (algo == "erm" || algo == "at" || algo == "trades") {
      apply_hyper(h, cfg.teacher);
      auto init = nn::Model::init(cfg.teacher_arch, pipelines::teacher_init_seed(seed));
      if (algo == "erm") return wrap(pipelines::train_erm(std::move(init), train, cfg.teacher).model);
      if (algo == "at") return wrap(pipelines::train_at(std::move(init), train, cfg.teacher).model);
      return wrap(pipelines::train_trades(std::move(init), train, cfg.teacher).model);
    }
    if (algo == "af" || algo == "af-smooth") {
      apply_hyper(h, cfg.finetune);
      if (algo == "af") cfg.finetune.distill.smooth_weight = 0.0f;
      return wrap(pipelines::adversarial_finetune(teacher(), train, cfg.finetune).model);
    }
    if (algo == "distill") {
      apply_hyper(h, cfg.distill);
      cfg.mode = pipelines::TeacherMode::plain;
      const auto t = teacher();
      const pipelines::TeacherBundle bundle{t, t.head(), cfg.distill.distill.temperature};
      return wrap(pipelines::distill(nn::Model::init(cfg.student_arch, pipelines::student_init_seed(seed)), train,
                                     bundle, cfg.mode, cfg.distill)
                      .model);
    }
    if (algo == "daft" || algo == "daft-single") {
      split_hyper(cfg.finetune, cfg.distill);
      cfg.mode = algo == "daft" ? pipelines::TeacherMode::multi : pipelines::TeacherMode::single;
      return wrap(pipelines::run_daft(cfg, train).student);
    }
    throw ConfigError("unknown algorithm '" + algo + "'");
  };
}

}  // namespace daft::harness
