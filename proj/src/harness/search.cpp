#include "daft/harness/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "daft/harness/config.hpp"
#include "daft/random.hpp"

namespace daft::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void finish_table(SelectionTable& t) {
  bool any = false;
  for (std::size_t c = 0; c < t.scores.size(); ++c) {
    if (t.failed(c)) {
      t.mean[c] = kNaN;
      continue;
    }
    double s = 0.0;
    for (double v : t.scores[c]) s += v;
    t.mean[c] = s / static_cast<double>(t.scores[c].size());
    if (!any || t.mean[c] > t.mean[t.best]) t.best = c;  // strict: ties keep the lower index
    any = true;
  }
  if (!any) {
    std::string why;
    for (const auto& e : t.errors) why += "\n  " + e;
    throw std::runtime_error("model selection: every configuration failed:" + why);
  }
}

// Fills table cells (config x column) by training on train_of(column) and
// scoring on val_of(column).
SelectionTable fill_table(std::vector<std::uint16_t> folds, std::span<const HyperConfig> configs,
                          const std::string& algorithm, const TrainFn& train, std::uint64_t seed, std::size_t workers,
                          const std::function<data::DomainDataset(std::size_t)>& train_of,
                          const std::function<data::DomainDataset(std::size_t)>& val_of) {
  if (configs.empty()) throw std::invalid_argument("model selection: no configurations");
  SelectionTable t;
  t.folds = std::move(folds);
  const std::size_t nf = t.folds.size();
  t.scores.assign(configs.size(), std::vector<double>(nf, kNaN));
  t.errors.assign(configs.size(), "");
  t.mean.assign(configs.size(), kNaN);
  std::mutex mu;
  run_parallel(configs.size() * nf, workers, [&](std::size_t job) {
    const std::size_t c = job / nf, f = job % nf;
    try {
      const auto tr = train_of(f);
      const auto va = val_of(f);
      const auto model = train(algorithm, configs[c], tr, derive_seed(seed, job));
      const double score = model(va);
      std::lock_guard lock(mu);
      t.scores[c][f] = score;
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      if (t.errors[c].empty()) t.errors[c] = "config " + std::to_string(c) + " fold " + std::to_string(f) + ": " + e.what();
    }
  });
  finish_table(t);
  return t;
}

}  // namespace

HyperRange HyperRange::real(std::string name, double lo, double hi) {
  HyperRange r{std::move(name), RangeKind::uniform_real, lo, hi};
  if (lo > 0.0 && hi / lo >= 100.0) r.kind = RangeKind::log_uniform_real;
  r.validate();
  return r;
}

HyperRange HyperRange::integer(std::string name, std::int64_t lo, std::int64_t hi) {
  HyperRange r{std::move(name), RangeKind::integer_range, static_cast<double>(lo), static_cast<double>(hi)};
  r.validate();
  return r;
}

void HyperRange::validate() const {
  if (!(lo <= hi)) throw std::invalid_argument("HyperRange '" + name + "': bounds out of order");
  if (kind == RangeKind::log_uniform_real && !(lo > 0.0)) {
    throw std::invalid_argument("HyperRange '" + name + "': log-uniform range needs positive bounds");
  }
  if (kind == RangeKind::integer_range && (lo != std::floor(lo) || hi != std::floor(hi))) {
    throw std::invalid_argument("HyperRange '" + name + "': integer range needs integral bounds");
  }
}

std::vector<HyperRange> default_ranges() {
  return {HyperRange::real("lr", 1e-6, 1e-3),       HyperRange::real("epsilon", 0.05, 0.5),
          HyperRange::integer("pgd_steps", 3, 7),   HyperRange::real("pgd_lr", 1e-3, 1e-1),
          HyperRange::real("temperature", 2.0, 8.0), HyperRange::real("alpha", 1e-6, 1e-2)};
}

std::vector<HyperConfig> sample_configs(std::span<const HyperRange> ranges, std::size_t n, std::uint64_t seed) {
  for (const auto& r : ranges) r.validate();
  std::mt19937_64 rng(seed);
  std::vector<HyperConfig> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    HyperConfig h;
    for (const auto& r : ranges) {
      switch (r.kind) {
        case RangeKind::log_uniform_real:
          h[r.name] = std::exp(std::uniform_real_distribution<double>(std::log(r.lo), std::log(r.hi))(rng));
          break;
        case RangeKind::uniform_real:
          h[r.name] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
          break;
        case RangeKind::integer_range:
          h[r.name] = static_cast<double>(std::uniform_int_distribution<std::int64_t>(
              static_cast<std::int64_t>(r.lo), static_cast<std::int64_t>(r.hi))(rng));
          break;
      }
    }
    out.push_back(std::move(h));
  }
  return out;
}

void apply_hyper(const HyperConfig& h, pipelines::TrainConfig& cfg) {
  for (const auto& [name, v] : h) {
    if (name == "lr") {
      cfg.lr = v;
    } else if (name == "epsilon") {
      cfg.perturb.epsilon = static_cast<float>(v);
    } else if (name == "pgd_steps") {
      cfg.perturb.steps = static_cast<std::size_t>(std::llround(v));
    } else if (name == "pgd_lr") {
      cfg.perturb.step_size = static_cast<float>(v);
    } else if (name == "temperature") {
      cfg.distill.temperature = static_cast<float>(v);
    } else if (name == "alpha") {
      cfg.distill.smooth_weight = static_cast<float>(v);
    } else if (name == "steps") {
      cfg.steps = static_cast<std::size_t>(std::llround(v));
    } else {
      throw ConfigError("unknown hyperparameter '" + name + "'");
    }
  }
}

std::string to_string(const HyperConfig& h) {
  std::string out;
  for (const auto& [k, v] : h) out += (out.empty() ? "" : " ") + k + "=" + fmt(v);
  return out;
}

data::DomainDataset AuditedData::view(std::span<const std::uint16_t> domains, data::SplitTag split) const {
  {
    std::lock_guard lock(mu_);
    for (auto d : domains) log_.push_back({d, split});
  }
  return data::select(*ds_, domains, split);
}

std::vector<SplitAccess> AuditedData::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

bool AuditedData::touched(std::uint16_t domain, data::SplitTag split) const {
  std::lock_guard lock(mu_);
  return std::any_of(log_.begin(), log_.end(), [&](const SplitAccess& a) { return a.domain == domain && a.split == split; });
}

void AuditedData::clear_log() const {
  std::lock_guard lock(mu_);
  log_.clear();
}

std::string SelectionTable::to_csv() const {
  std::string out = "config";
  for (auto d : folds) out += ",domain_" + std::to_string(d);
  out += ",mean,status\n";
  for (std::size_t c = 0; c < scores.size(); ++c) {
    out += std::to_string(c);
    for (double v : scores[c]) out += "," + (std::isnan(v) ? std::string("") : fmt(v));
    out += "," + (std::isnan(mean[c]) ? std::string("") : fmt(mean[c]));
    out += failed(c) ? ",failed" : (c == best ? ",selected" : ",ok");
    out += "\n";
  }
  return out;
}

void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

SelectionTable leave_one_domain_out_select(const AuditedData& data, std::span<const std::uint16_t> train_domains,
                                           const std::string& algorithm, std::span<const HyperConfig> configs,
                                           const TrainFn& train, std::uint64_t seed, std::size_t workers) {
  if (train_domains.size() < 2) {
    throw std::invalid_argument("leave-one-domain-out selection needs at least 2 training domains");
  }
  std::vector<std::uint16_t> folds(train_domains.begin(), train_domains.end());
  auto rest = [folds](std::size_t f) {
    std::vector<std::uint16_t> r;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      if (i != f) r.push_back(folds[i]);
    }
    return r;
  };
  return fill_table(
      folds, configs, algorithm, train, seed, workers,
      [&](std::size_t f) { return data.view(rest(f), data::SplitTag::train80); },
      [&](std::size_t f) {
        const std::uint16_t d = folds[f];
        return data.view(std::span(&d, 1), data::SplitTag::eval20);
      });
}

SelectionTable oracle_select(const AuditedData& data, std::span<const std::uint16_t> train_domains,
                             std::uint16_t target, const std::string& algorithm, std::span<const HyperConfig> configs,
                             const TrainFn& train, std::uint64_t seed, std::size_t workers) {
  if (train_domains.empty()) throw std::invalid_argument("oracle selection needs at least one training domain");
  std::vector<std::uint16_t> domains(train_domains.begin(), train_domains.end());
  return fill_table(
      {target}, configs, algorithm, train, seed, workers,
      [&](std::size_t) { return data.view(domains, data::SplitTag::train80); },
      [&](std::size_t) { return data.view(std::span(&target, 1), data::SplitTag::train80); });
}

}  // namespace daft::harness
