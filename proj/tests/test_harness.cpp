#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "checks.hpp"
#include "daft/data/colored.hpp"
#include "daft/harness/config.hpp"
#include "daft/harness/experiment.hpp"
#include "daft/harness/search.hpp"
#include "json.hpp"

using namespace daft;
using namespace daft::harness;
namespace fs = std::filesystem;

namespace {

// Four tiny domains of the two-feature toy, tagged 0..3 and split 80/20.
data::DomainDataset four_domains() {
  std::vector<data::DomainDataset> parts;
  for (std::uint16_t d = 0; d < 4; ++d) {
    auto p = data::make_two_feature_dataset(20, 100 + d, 0.5, data::ColorMode::train_correlated);
    p.domains.assign(p.size(), d);
    parts.push_back(std::move(p));
  }
  auto ds = data::concat(parts);
  data::assign_splits(ds, 3);
  return ds;
}

std::uint16_t only_domain(const data::DomainDataset& ds) {
  REQUIRE(ds.size() > 0);
  for (auto d : ds.domains) REQUIRE(d == ds.domains[0]);
  return ds.domains[0];
}

// A stub backend whose "accuracy" is read from a table indexed by the
// config's id and the evaluated domain.
TrainFn table_trainer(std::vector<std::vector<double>> score, std::set<std::pair<int, int>> fail = {}) {
  return [score, fail](const std::string&, const HyperConfig& h, const data::DomainDataset& train, std::uint64_t) {
    const int id = static_cast<int>(h.at("id"));
    for (auto s : train.splits) REQUIRE(s == data::SplitTag::train80);
    std::set<std::uint16_t> seen(train.domains.begin(), train.domains.end());
    return Classifier([=](const data::DomainDataset& val) {
      const auto d = only_domain(val);
      CHECK(seen.count(d) == 0);  // never score on a domain seen in training
      if (fail.count({id, d})) throw std::runtime_error("diverged");
      return score[id][d];
    });
  };
}

std::vector<HyperConfig> ids(std::size_t n) {
  std::vector<HyperConfig> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i]["id"] = static_cast<double>(i);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("sample_configs: seeded, sized and distributed per range kind") {
  const auto ranges = default_ranges();
  CHECK(sample_configs(ranges, 0, 1).empty());
  CHECK(sample_configs(ranges, 5, 1) == sample_configs(ranges, 5, 1));
  CHECK(sample_configs(ranges, 5, 1) != sample_configs(ranges, 5, 2));

  CHECK(HyperRange::real("lr", 1e-6, 1e-3).kind == RangeKind::log_uniform_real);
  CHECK(HyperRange::real("epsilon", 0.05, 0.5).kind == RangeKind::uniform_real);
  CHECK_THROWS(HyperRange::real("x", 2.0, 1.0));
  CHECK_THROWS(HyperRange::integer("x", 5, 4));

  const std::size_t n = 6000;
  const auto draws = sample_configs(ranges, n, 7);
  std::map<int, std::size_t> steps;
  std::size_t low_lr = 0, low_eps = 0;
  for (const auto& h : draws) {
    CHECK(h.size() == ranges.size());
    const double lr = h.at("lr"), eps = h.at("epsilon"), k = h.at("pgd_steps");
    CHECK((lr >= 1e-6 && lr <= 1e-3));
    CHECK((eps >= 0.05 && eps <= 0.5));
    CHECK(k == std::floor(k));
    ++steps[static_cast<int>(k)];
    low_lr += lr < 1e-5;    // one of three decades
    low_eps += eps < 0.14;  // a fifth of the width
  }
  CHECK(steps.size() == 5);
  for (auto [k, c] : steps) {
    INFO("pgd_steps " << k);
    CHECK(std::abs(double(c) / n - 0.2) < 0.03);
  }
  CHECK(std::abs(double(low_lr) / n - 1.0 / 3.0) < 0.03);
  CHECK(std::abs(double(low_eps) / n - 0.2) < 0.03);
}

TEST_CASE("apply_hyper writes the named fields and rejects unknown names") {
  pipelines::TrainConfig cfg;
  apply_hyper({{"lr", 1e-4}, {"epsilon", 0.2}, {"pgd_steps", 5}, {"pgd_lr", 0.05}, {"temperature", 3}, {"alpha", 0.01}},
              cfg);
  CHECK(cfg.lr == 1e-4);
  CHECK(cfg.perturb.epsilon == doctest::Approx(0.2));
  CHECK(cfg.perturb.steps == 5);
  CHECK(cfg.perturb.step_size == doctest::Approx(0.05));
  CHECK(cfg.distill.temperature == doctest::Approx(3.0));
  CHECK(cfg.distill.smooth_weight == doctest::Approx(0.01));
  CHECK_THROWS(apply_hyper({{"momentum", 0.9}}, cfg));
}

TEST_CASE("ini: parse, canonical text and errors") {
  const auto ini = Ini::parse("# top comment\nname = x\n[teacher]\nsteps = 40 ; trailing\nlr=0.0005\n\n[data]\nseed = 3\n");
  CHECK(ini.get("", "name", "") == "x");
  CHECK(ini.integer("teacher", "steps", 0) == 40);
  CHECK(ini.number("teacher", "lr", 0) == doctest::Approx(5e-4));
  CHECK(ini.get("teacher", "missing", "fb") == "fb");
  CHECK_FALSE(ini.has("data", "steps"));
  const auto again = Ini::parse(ini.to_text());
  CHECK(again.sections() == ini.sections());
  CHECK(again.to_text() == ini.to_text());
  CHECK(config_hash(again) == config_hash(ini));
  auto changed = ini;
  changed.set("data", "seed", "4");
  CHECK(config_hash(changed) != config_hash(ini));

  CHECK_THROWS_AS(Ini::parse("[teacher\nlr = 1"), ConfigError);
  CHECK_THROWS_AS(Ini::parse("lr 1"), ConfigError);
  CHECK_THROWS_AS(Ini::parse("[a]\nk = 1\nk = 2"), ConfigError);
  CHECK_THROWS_AS(Ini::parse("[t]\nsteps = many").integer("t", "steps", 0), ConfigError);
  CHECK_THROWS_AS(Ini::parse("[t]\nlr = fast").number("t", "lr", 0), ConfigError);
  CHECK_THROWS_AS(Ini::parse("[t]\nspeling = 1").require_known("t", {"spelling"}), ConfigError);
  CHECK_THROWS_AS(Ini::load("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("run configs round-trip through ini and reject unknown input") {
  const auto d = RunConfig::defaults();
  const auto back = RunConfig::from_ini(d.to_ini());
  CHECK(back.to_ini().to_text() == d.to_ini().to_text());
  auto ini = d.to_ini();
  ini.set("teacher", "steps", "17");
  ini.set("finetune", "epsilon", "0.125");
  const auto c = RunConfig::from_ini(ini);
  CHECK(c.daft.teacher.steps == 17);
  CHECK(c.daft.finetune.perturb.epsilon == 0.125f);
  auto bad = d.to_ini();
  bad.set("extras", "k", "v");
  CHECK_THROWS_AS(RunConfig::from_ini(bad), ConfigError);
  bad = d.to_ini();
  bad.set("teacher", "stpes", "3");
  CHECK_THROWS_AS(RunConfig::from_ini(bad), ConfigError);
  bad = d.to_ini();
  bad.set("data", "source", "cifar");
  CHECK_THROWS_AS(RunConfig::from_ini(bad), ConfigError);
}

TEST_CASE("leave-one-domain-out selection against a hand-computed table") {
  const auto ds = four_domains();
  const AuditedData audited(ds);
  const std::vector<std::uint16_t> train_domains = {0, 1, 2};
  // score[config][domain]; means over folds 0..2: 0.5, 0.7, 0.6.
  const std::vector<std::vector<double>> score = {
      {0.4, 0.5, 0.6, 0.9}, {0.9, 0.6, 0.6, 0.1}, {0.6, 0.6, 0.6, 0.99}};
  const auto t = leave_one_domain_out_select(audited, train_domains, "erm", ids(3), table_trainer(score), 1);
  CHECK(t.folds == train_domains);
  CHECK(t.best == 1);
  CHECK(t.mean[0] == doctest::Approx(0.5));
  CHECK(t.mean[1] == doctest::Approx(0.7));
  CHECK(t.mean[2] == doctest::Approx(0.6));
  // The held-out target (domain 3) is never read during selection.
  CHECK_FALSE(audited.touched(3, data::SplitTag::train80));
  CHECK_FALSE(audited.touched(3, data::SplitTag::eval20));

  SUBCASE("ties go to the lowest index") {
    const std::vector<std::vector<double>> tied = {{0.5, 0.5, 0.5, 0}, {0.7, 0.7, 0.7, 0}, {0.7, 0.7, 0.7, 0}};
    CHECK(leave_one_domain_out_select(audited, train_domains, "erm", ids(3), table_trainer(tied), 1).best == 1);
  }
  SUBCASE("failed configs are excluded, not fatal") {
    const auto f = leave_one_domain_out_select(audited, train_domains, "erm", ids(3), table_trainer(score, {{1, 2}}), 1);
    CHECK(f.failed(1));
    CHECK(std::isnan(f.mean[1]));
    CHECK(f.errors[1].find("diverged") != std::string::npos);
    CHECK(f.best == 2);
    CHECK(f.to_csv().find("config") != std::string::npos);
  }
  SUBCASE("all configs failing is an error") {
    CHECK_THROWS(leave_one_domain_out_select(audited, train_domains, "erm", ids(2),
                                             table_trainer(score, {{0, 0}, {1, 1}}), 1));
  }
  SUBCASE("parallel workers give the same table") {
    const auto p = leave_one_domain_out_select(audited, train_domains, "erm", ids(3), table_trainer(score), 1, 3);
    CHECK(p.scores == t.scores);
    CHECK(p.best == t.best);
  }
}

TEST_CASE("oracle selection reads only the target's training split") {
  const auto ds = four_domains();
  const AuditedData audited(ds);
  const std::vector<std::uint16_t> train_domains = {0, 1, 2};
  const std::vector<std::vector<double>> score = {{0, 0, 0, 0.3}, {0, 0, 0, 0.8}, {0, 0, 0, 0.5}};
  const auto t = oracle_select(audited, train_domains, 3, "erm", ids(3), table_trainer(score), 1);
  CHECK(t.best == 1);
  CHECK(audited.touched(3, data::SplitTag::train80));
  CHECK_FALSE(audited.touched(3, data::SplitTag::eval20));
  for (const auto& a : audited.log()) CHECK(a.split == data::SplitTag::train80);
}

namespace {

// Deterministic stub whose accuracy depends on the config, the domain and the seed.
TrainFn smooth_trainer() {
  return [](const std::string& algo, const HyperConfig& h, const data::DomainDataset&, std::uint64_t seed) {
    const double base = (algo == "daft" ? 0.1 : 0.0) + std::log10(h.at("lr")) / 100.0;
    return Classifier([=](const data::DomainDataset& val) {
      return 0.5 + base + 0.01 * double(val.domains[0]) + 1e-3 * double(seed % 7);
    });
  };
}

ExperimentPlan stub_plan() {
  ExperimentPlan plan;
  plan.name = "stub";
  plan.algorithms = {"erm", "daft"};
  plan.domains = {0, 1, 2, 3};
  plan.holdouts = {3};
  plan.n_configs = 3;
  plan.n_seeds = 3;
  plan.comparisons = {{"daft", "erm"}};
  plan.seed = 4;
  return plan;
}

}  // namespace

TEST_CASE("experiment reports are reproducible and complete") {
  const auto ds = four_domains();
  const AuditedData audited(ds);
  const auto base = fs::temp_directory_path() / "daft_harness_test";
  fs::remove_all(base);
  const auto a = run_experiment(stub_plan(), audited, smooth_trainer(), (base / "a").string());
  const auto b = run_experiment(stub_plan(), audited, smooth_trainer(), (base / "b").string());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    ++files;
    const auto name = e.path().filename().string();
    INFO(name);
    const auto pa = read_file(e.path()), pb = read_file(base / "b" / name);
    if (name != "records.jsonl") {
      CHECK(pa == pb);
      continue;
    }
    // Per-run records carry wall-clock time; everything else must agree.
    std::istringstream la(pa), lb(pb);
    std::string ra, rb;
    while (std::getline(la, ra)) {
      REQUIRE(std::getline(lb, rb));
      auto ja = nlohmann::json::parse(ra), jb = nlohmann::json::parse(rb);
      ja.erase("wall_seconds");
      jb.erase("wall_seconds");
      CHECK(ja == jb);
    }
  }
  CHECK(files >= 3);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_markdown() == b.to_markdown());
  CHECK(nlohmann::json::accept(a.to_json()));

  const auto& daft_cell = a.cell("daft", 3);
  const auto& erm_cell = a.cell("erm", 3);
  CHECK(daft_cell.ood.size() == 3);
  CHECK(daft_cell.ood_mean > erm_cell.ood_mean);
  REQUIRE(a.comparisons.size() == 1);
  CHECK(a.comparisons[0].complete);
  CHECK(a.comparisons[0].test.t > 0);
  CHECK_THROWS(a.cell("trades", 3));

  auto single = stub_plan();
  single.n_seeds = 1;
  const auto s = run_experiment(single, audited, smooth_trainer());
  CHECK(s.cell("erm", 3).ood_std == 0.0);
  fs::remove_all(base);
}

TEST_CASE("experiment plans are validated") {
  auto plan = stub_plan();
  plan.algorithms.clear();
  CHECK_THROWS(plan.validate());
  plan = stub_plan();
  plan.n_seeds = 0;
  CHECK_THROWS(plan.validate());
  plan = stub_plan();
  plan.holdouts = {9};
  CHECK_THROWS(plan.validate());
  CHECK(parse_selection(to_string(Selection::oracle)) == Selection::oracle);
  CHECK_THROWS(parse_selection("best"));
  plan = stub_plan();
  plan.holdouts.clear();
  CHECK(plan.holdout_domains() == plan.domains);
}
