// Command-line front end: data generation, training pipelines, evaluation,
// diagnostics and the model-selection harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "daft/analysis/metrics.hpp"
#include "daft/analysis/probes.hpp"
#include "daft/analysis/stats.hpp"
#include "daft/binary_io.hpp"
#include "daft/data/colored.hpp"
#include "daft/data/dataset.hpp"
#include "daft/harness/config.hpp"
#include "daft/harness/experiment.hpp"
#include "daft/nn/checkpoint.hpp"
#include "daft/pipelines.hpp"
#include "daft/random.hpp"

namespace fs = std::filesystem;
using namespace daft;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string data;
  std::string checkpoint;
};

harness::RunConfig load_run_config(const Common& c) {
  auto ini = c.config.empty() ? harness::Ini{} : harness::Ini::load(c.config);
  if (c.seed_set) ini.set("run", "seed", std::to_string(c.seed));
  return harness::RunConfig::from_ini(ini);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw harness::ConfigError(std::string("missing required option ") + flag);
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::string loss_events(const std::string& run_id, const std::string& stage, const std::vector<float>& losses) {
  std::string out;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out += analysis::to_json_line({run_id, stage, i, "train80", -1, "loss", losses[i]}) + "\n";
  }
  return out;
}

void add_common(CLI::App* app, Common& c, bool data = true, bool checkpoint = true) {
  app->add_option("--config", c.config, "Run configuration file");
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "Run seed (overrides [run] seed)");
  app->add_option("--out", c.out, "Output file or directory");
  if (data) app->add_option("--data", c.data, "Dataset file");
  if (checkpoint) app->add_option("--checkpoint", c.checkpoint, "Model checkpoint");
}

// ---- gen-data -------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& kind) {
  require(c.out, "--out");
  const auto cfg = load_run_config(c);
  const auto& d = cfg.data;
  data::DomainDataset ds;
  if (kind == "train") {
    ds = data::make_colored_dataset(d.colored, d.n_per_class, derive_seed(d.seed, 1), data::ColorMode::train_correlated);
  } else if (kind == "id") {
    ds = data::make_colored_dataset(d.colored, d.eval_per_class, derive_seed(d.seed, 2),
                                    data::ColorMode::train_correlated);
  } else if (kind == "ood") {
    ds = data::make_colored_dataset(d.colored, d.eval_per_class, derive_seed(d.seed, 3),
                                    data::ColorMode::test_uncorrelated);
  } else if (kind == "suite") {
    ds = data::make_domain_suite(d.colored, d.suite_per_class, derive_seed(d.seed, 4));
  } else {
    throw harness::ConfigError("unknown --kind '" + kind + "' (expected train|id|ood|suite)");
  }
  data::save_dataset(ds, c.out);
  std::printf("wrote %zu examples of shape %s to %s\n", ds.size(), shape_str(ds.example_shape()).c_str(), c.out.c_str());
  return kOk;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const Common& c, const std::string& algo) {
  require(c.data, "--data");
  require(c.out, "--out");
  const auto cfg = load_run_config(c);
  const auto ds = data::load_dataset(c.data);
  const auto& f = cfg.daft;
  pipelines::TrainResult result;
  std::string stage = algo;
  if (algo == "erm" || algo == "at" || algo == "trades") {
    auto init = c.checkpoint.empty() ? nn::Model::init(f.teacher_arch, pipelines::teacher_init_seed(cfg.seed))
                                     : nn::load_checkpoint(c.checkpoint);
    if (algo == "erm") result = pipelines::train_erm(std::move(init), ds, f.teacher);
    if (algo == "at") result = pipelines::train_at(std::move(init), ds, f.teacher);
    if (algo == "trades") result = pipelines::train_trades(std::move(init), ds, f.teacher);
  } else if (algo == "af" || algo == "af-smooth") {
    require(c.checkpoint, "--checkpoint (the standard-trained model to fine-tune)");
    auto ft = f.finetune;
    if (algo == "af") ft.distill.smooth_weight = 0.0f;
    result = pipelines::adversarial_finetune(nn::load_checkpoint(c.checkpoint), ds, ft);
  } else {
    throw harness::ConfigError("unknown --algo '" + algo + "' (expected erm|at|trades|af|af-smooth)");
  }
  nn::save_checkpoint(result.model, c.out);
  write_text(c.out + ".metrics.jsonl", loss_events(algo + "-s" + std::to_string(cfg.seed), stage, result.losses));
  std::printf("%s: %zu steps, final loss %.6f -> %s\n", algo.c_str(), result.losses.size(),
              result.losses.empty() ? 0.0 : result.losses.back(), c.out.c_str());
  return kOk;
}

// ---- distill --------------------------------------------------------------

int cmd_distill(const Common& c, const std::string& mode_text, const std::string& adv_checkpoint) {
  require(c.data, "--data");
  require(c.out, "--out");
  require(c.checkpoint, "--checkpoint (standard teacher)");
  const auto mode = pipelines::parse_teacher_mode(mode_text);
  const auto cfg = load_run_config(c);
  const auto ds = data::load_dataset(c.data);
  const auto teacher = nn::load_checkpoint(c.checkpoint);
  nn::Head adv = teacher.head().clone();
  if (mode != pipelines::TeacherMode::plain) {
    require(adv_checkpoint, "--adv-checkpoint (adversarially fine-tuned teacher)");
    const auto tuned = nn::load_checkpoint(adv_checkpoint);
    if (nn::extractor_hash(tuned) != nn::extractor_hash(teacher)) {
      throw harness::ConfigError("--adv-checkpoint does not share the teacher's feature extractor");
    }
    adv = tuned.head().clone();
  }
  const pipelines::TeacherBundle bundle{teacher, adv, cfg.daft.distill.distill.temperature};
  auto result = pipelines::distill(nn::Model::init(cfg.daft.student_arch, pipelines::student_init_seed(cfg.seed)), ds,
                                   bundle, mode, cfg.daft.distill);
  nn::save_checkpoint(result.model, c.out);
  write_text(c.out + ".metrics.jsonl", loss_events("distill-" + mode_text, "distill", result.losses));
  std::printf("distill (%s): %zu steps, final loss %.6f -> %s\n", mode_text.c_str(), result.losses.size(),
              result.losses.empty() ? 0.0 : result.losses.back(), c.out.c_str());
  return kOk;
}

// ---- daft -----------------------------------------------------------------

int cmd_daft(const Common& c) {
  require(c.data, "--data");
  require(c.out, "--out");
  const auto cfg = load_run_config(c);
  const auto ds = data::load_dataset(c.data);
  fs::create_directories(c.out);
  const auto ini = cfg.to_ini();
  write_text(c.out + "/config.ini", ini.to_text());
  const auto r = pipelines::run_daft(cfg.daft, ds);
  nn::save_checkpoint(r.teacher, c.out + "/teacher.ckpt");
  nn::save_checkpoint(r.finetuned, c.out + "/finetuned.ckpt");
  nn::save_checkpoint(r.student, c.out + "/student.ckpt");
  const std::string id = "daft-" + harness::config_hash(ini);
  write_text(c.out + "/metrics.jsonl", loss_events(id, "teacher", r.teacher_losses) +
                                           loss_events(id, "finetune", r.finetune_losses) +
                                           loss_events(id, "distill", r.distill_losses));
  std::printf("daft run %s written to %s\n", id.c_str(), c.out.c_str());
  return kOk;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const Common& c) {
  require(c.data, "--data");
  require(c.checkpoint, "--checkpoint");
  const auto model = nn::load_checkpoint(c.checkpoint);
  const auto ds = data::load_dataset(c.data);
  const std::string run = fs::path(c.checkpoint).stem().string();
  std::string lines = analysis::to_json_line({run, "eval", 0, "all", -1, "accuracy", analysis::accuracy(model, ds)}) + "\n";
  for (auto d : ds.domain_ids()) {
    for (auto split : {data::SplitTag::train80, data::SplitTag::eval20}) {
      bool any = false;
      for (std::size_t i = 0; i < ds.size() && !any; ++i) any = ds.domains[i] == d && ds.splits[i] == split;
      if (!any) continue;
      const auto part = data::select(ds, std::span(&d, 1), split);
      lines += analysis::to_json_line({run, "eval", 0, split == data::SplitTag::train80 ? "train80" : "eval20", d,
                                       "accuracy", analysis::accuracy(model, part)}) +
               "\n";
    }
  }
  std::fputs(lines.c_str(), stdout);
  if (!c.out.empty()) write_text(c.out, lines);
  return kOk;
}

// ---- analyze --------------------------------------------------------------

std::vector<double> read_numbers(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  for (auto& ch : text) {
    if (ch == ',' || ch == ';') ch = ' ';
  }
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw FormatError(path + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  return out;
}

struct AnalyzeArgs {
  std::string probe;
  std::string checkpoint_b;
  std::string a, b;
  std::size_t k = 1;
  float epsilon = 0.5f;
  std::size_t pgd_steps = 3;
  double threshold = 0.7;
};

int cmd_analyze(const Common& c, const AnalyzeArgs& a) {
  nlohmann::ordered_json j;
  std::string csv;
  if (a.probe == "ttest") {
    require(a.a, "--a");
    require(a.b, "--b");
    const auto r = analysis::paired_ttest(read_numbers(a.a), read_numbers(a.b));
    j["t"] = r.t;
    j["p"] = r.p;
    j["degenerate"] = r.degenerate;
    j["significant"] = r.p < 0.05;
    csv = "t,p,degenerate\n" + std::to_string(r.t) + "," + std::to_string(r.p) + "," + (r.degenerate ? "1" : "0") + "\n";
  } else {
    require(c.checkpoint, "--checkpoint");
    require(c.data, "--data");
    const auto model = nn::load_checkpoint(c.checkpoint);
    const auto ds = data::load_dataset(c.data);
    if (a.probe == "features") {
      const auto attrs = analysis::colored_attributes(ds);
      const auto p = analysis::feature_correlations(model, ds, attrs);
      const auto shape = p.shape_dominant("shape", "color", a.threshold);
      const auto w = analysis::head_feature_weight(model.head());
      std::size_t n_shape = 0;
      csv = "feature,r_shape,r_color,zero_variance,shape_dominant,head_weight\n";
      for (std::size_t i = 0; i < p.num_features(); ++i) {
        n_shape += shape[i];
        csv += std::to_string(i) + "," + std::to_string(p.of("shape")[i]) + "," + std::to_string(p.of("color")[i]) +
               "," + (p.zero_variance[i] ? "1" : "0") + "," + (shape[i] ? "1" : "0") + "," + std::to_string(w[i]) + "\n";
      }
      j["features"] = p.num_features();
      j["threshold"] = a.threshold;
      j["shape_dominant"] = n_shape;
      j["shape_dominant_used"] = analysis::count_used_features(shape, model.head());
      j["r_shape"] = p.of("shape");
      j["r_color"] = p.of("color");
    } else if (a.probe == "rap") {
      adversary::PerturbConfig pc;
      pc.epsilon = a.epsilon;
      pc.steps = a.pgd_steps;
      pc.step_size = a.epsilon / 2.0f;
      pc.seed = c.seed;
      pc.space = adversary::Space::input;
      const auto ri = analysis::rap(model, model.head(), ds, pc);
      pc.space = adversary::Space::feature;
      const auto rf = analysis::rap(model, model.head(), ds, pc);
      csv = "feature,rap_input,rap_feature,excluded_input,excluded_feature\n";
      for (std::size_t i = 0; i < ri.values.size(); ++i) {
        csv += std::to_string(i) + "," + std::to_string(ri.values[i]) + "," + std::to_string(rf.values[i]) + "," +
               std::to_string(ri.excluded[i]) + "," + std::to_string(rf.excluded[i]) + "\n";
      }
      j["rap_input"] = ri.values;
      j["rap_feature"] = rf.values;
      j["excluded_input"] = ri.excluded;
      j["correlation"] = analysis::pearson(ri.values, rf.values).value;
    } else if (a.probe == "logits") {
      require(a.checkpoint_b, "--checkpoint-b");
      const auto other = nn::load_checkpoint(a.checkpoint_b);
      const auto la = analysis::dataset_logits(model, ds), lb = analysis::dataset_logits(other, ds);
      j["spearman"] = analysis::mean_logit_spearman(la, lb);
      j["k"] = a.k;
      j["prec_at_k"] = analysis::prec_at_k(la, lb, a.k);
      csv = "k,prec_at_k,spearman\n" + std::to_string(a.k) + "," + std::to_string(j["prec_at_k"].get<double>()) + "," +
            std::to_string(j["spearman"].get<double>()) + "\n";
    } else {
      throw harness::ConfigError("unknown --probe '" + a.probe + "' (expected features|rap|logits|ttest)");
    }
  }
  std::printf("%s\n", j.dump(2).c_str());
  if (!c.out.empty()) {
    write_text(c.out + ".json", j.dump(2) + "\n");
    write_text(c.out + ".csv", csv);
  }
  return kOk;
}

// ---- search / report ------------------------------------------------------

struct SearchArgs {
  std::string select = "lodo";
  std::vector<std::string> algorithms = {"erm"};
  std::vector<std::uint16_t> holdouts;
  bool paper_protocol = false;
  std::size_t configs = 0;
  std::size_t seeds = 5;
  std::size_t workers = 1;
  std::vector<std::string> compare;
};

int cmd_search(const Common& c, const SearchArgs& s) {
  require(c.out, "--out");
  const auto cfg = load_run_config(c);
  data::DomainDataset ds = c.data.empty() ? data::make_domain_suite(cfg.data.colored, cfg.data.suite_per_class,
                                                                    derive_seed(cfg.data.seed, 4))
                                          : data::load_dataset(c.data);
  harness::ExperimentPlan plan;
  plan.name = "search-" + s.select;
  plan.algorithms = s.algorithms;
  plan.domains = ds.domain_ids();
  plan.holdouts = s.holdouts;
  plan.selection = harness::parse_selection(s.select);
  plan.n_configs = s.configs ? s.configs : (s.paper_protocol ? 32 : 8);
  plan.n_seeds = s.seeds;
  plan.seed = cfg.seed;
  plan.workers = s.workers;
  for (const auto& pair : s.compare) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw harness::ConfigError("--compare expects A:B, got '" + pair + "'");
    plan.comparisons.emplace_back(pair.substr(0, colon), pair.substr(colon + 1));
  }
  for (const auto& a : plan.algorithms) {
    const auto& known = harness::known_algorithms();
    if (std::find(known.begin(), known.end(), a) == known.end()) {
      throw harness::ConfigError("unknown algorithm '" + a + "'");
    }
  }
  fs::create_directories(c.out);
  write_text(c.out + "/config.ini", cfg.to_ini().to_text());
  const harness::AuditedData audited(ds);
  const auto report = harness::run_experiment(plan, audited, harness::pipeline_trainer(cfg), c.out);
  std::fputs(report.to_markdown().c_str(), stdout);
  return kOk;
}

int cmd_report(const Common& c) {
  require(c.out, "--out (run directory)");
  const auto bytes = read_file_bytes(c.out + "/report.md");
  std::fwrite(bytes.data(), 1, bytes.size(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distillation with adversarially fine-tuned teachers"};
  app.require_subcommand(1);
  Common common;

  std::string kind = "train";
  auto* gen = app.add_subcommand("gen-data", "Generate a colored dataset");
  add_common(gen, common, false, false);
  gen->add_option("--kind", kind, "train | id | ood | suite")->check(CLI::IsMember({"train", "id", "ood", "suite"}));

  std::string algo;
  auto* train = app.add_subcommand("train", "Train a model with one pipeline");
  add_common(train, common);
  train->add_option("--algo", algo, "erm | at | trades | af | af-smooth")->required();

  std::string mode = "multi", adv_checkpoint;
  auto* dist = app.add_subcommand("distill", "Distill a student from a teacher");
  add_common(dist, common);
  dist->add_option("--mode", mode, "single | multi | plain");
  dist->add_option("--adv-checkpoint", adv_checkpoint, "Adversarially fine-tuned teacher");

  auto* daft_cmd = app.add_subcommand("daft", "Teacher training, smooth fine-tuning and distillation");
  add_common(daft_cmd, common);

  auto* eval = app.add_subcommand("eval", "Accuracy per domain and split");
  add_common(eval, common);

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Diagnostics: feature probe, RAP, logit agreement, t-test");
  add_common(analyze, common);
  analyze->add_option("--probe", aa.probe, "features | rap | logits | ttest")->required();
  analyze->add_option("--checkpoint-b", aa.checkpoint_b, "Second model for --probe logits");
  analyze->add_option("--a", aa.a, "Per-seed metrics of the first method (--probe ttest)");
  analyze->add_option("--b", aa.b, "Per-seed metrics of the second method (--probe ttest)");
  analyze->add_option("--k", aa.k, "k for prec@k");
  analyze->add_option("--epsilon", aa.epsilon, "Perturbation radius for --probe rap");
  analyze->add_option("--pgd-steps", aa.pgd_steps, "PGD iterations for --probe rap");
  analyze->add_option("--threshold", aa.threshold, "|r| threshold for shape-dominant features");

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "Random hyperparameter search with model selection");
  add_common(search, common, true, false);
  search->add_option("--select", sa.select, "lodo | oracle")->check(CLI::IsMember({"lodo", "oracle"}));
  search->add_option("--algo", sa.algorithms, "Algorithms to tune");
  search->add_option("--holdout", sa.holdouts, "Holdout domains (default: all)");
  search->add_flag("--paper-protocol", sa.paper_protocol, "Sample 32 configurations instead of 8");
  search->add_option("--configs", sa.configs, "Override the number of sampled configurations");
  search->add_option("--seeds", sa.seeds, "Seeds per selected configuration");
  search->add_option("--workers", sa.workers, "Parallel training jobs");
  search->add_option("--compare", sa.compare, "Paired t-test between algorithms, as A:B");

  auto* report = app.add_subcommand("report", "Print the report of a run directory");
  add_common(report, common, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, kind);
    if (train->parsed()) return cmd_train(common, algo);
    if (dist->parsed()) return cmd_distill(common, mode, adv_checkpoint);
    if (daft_cmd->parsed()) return cmd_daft(common);
    if (eval->parsed()) return cmd_eval(common);
    if (analyze->parsed()) return cmd_analyze(common, aa);
    if (search->parsed()) return cmd_search(common, sa);
    if (report->parsed()) return cmd_report(common);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const harness::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
