#include "daft/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "daft/random.hpp"

namespace daft::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest text that reads back to the same double.
  for (int p = 1; p <= 17; ++p) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

constexpr std::uint64_t kTeacherStream = 1, kFinetuneStream = 2, kDistillStream = 3;

void read_train_section(const Ini& ini, const std::string& sec, std::uint64_t run_seed, std::uint64_t stream,
                        pipelines::TrainConfig& c) {
  c.lr = ini.number(sec, "lr", c.lr);
  c.batch_size = ini.integer(sec, "batch_size", c.batch_size);
  c.steps = ini.integer(sec, "steps", c.steps);
  c.seed = ini.integer(sec, "seed", derive_seed(run_seed, stream));
  auto& p = c.perturb;
  p.epsilon = static_cast<float>(ini.number(sec, "epsilon", p.epsilon));
  p.steps = ini.integer(sec, "pgd_steps", p.steps);
  p.step_size = static_cast<float>(ini.number(sec, "pgd_lr", p.step_size));
  p.space = adversary::parse_space(ini.get(sec, "space", adversary::to_string(p.space)));
  const auto init = ini.get(sec, "init", p.init == adversary::Init::zero ? "zero" : "random");
  if (init != "zero" && init != "random") throw ConfigError("[" + sec + "] init must be zero|random, got '" + init + "'");
  p.init = init == "zero" ? adversary::Init::zero : adversary::Init::random_in_ball;
  auto& d = c.distill;
  d.temperature = static_cast<float>(ini.number(sec, "temperature", d.temperature));
  d.smooth_weight = static_cast<float>(ini.number(sec, "alpha", d.smooth_weight));
  const auto order = ini.get(sec, "kl_order", d.order == losses::KlOrder::teacher_target ? "teacher_target" : "student_first");
  if (order != "teacher_target" && order != "student_first") {
    throw ConfigError("[" + sec + "] kl_order must be teacher_target|student_first, got '" + order + "'");
  }
  d.order = order == "teacher_target" ? losses::KlOrder::teacher_target : losses::KlOrder::student_first;
  d.share_adversarial_point = ini.integer(sec, "share_point", d.share_adversarial_point ? 1 : 0) != 0;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("[" + sec + "] " + e.what());
  }
}

void write_train_section(Ini& ini, const std::string& sec, const pipelines::TrainConfig& c) {
  ini.set(sec, "lr", format_number(c.lr));
  ini.set(sec, "batch_size", std::to_string(c.batch_size));
  ini.set(sec, "steps", std::to_string(c.steps));
  ini.set(sec, "seed", std::to_string(c.seed));
  ini.set(sec, "epsilon", format_number(c.perturb.epsilon));
  ini.set(sec, "pgd_steps", std::to_string(c.perturb.steps));
  ini.set(sec, "pgd_lr", format_number(c.perturb.step_size));
  ini.set(sec, "space", adversary::to_string(c.perturb.space));
  ini.set(sec, "init", c.perturb.init == adversary::Init::zero ? "zero" : "random");
  ini.set(sec, "temperature", format_number(c.distill.temperature));
  ini.set(sec, "alpha", format_number(c.distill.smooth_weight));
  ini.set(sec, "kl_order", c.distill.order == losses::KlOrder::teacher_target ? "teacher_target" : "student_first");
  ini.set(sec, "share_point", c.distill.share_adversarial_point ? "1" : "0");
}

void require_train_keys(const Ini& ini, const std::string& sec) {
  ini.require_known(sec, {"lr", "batch_size", "steps", "seed", "epsilon", "pgd_steps", "pgd_lr", "space", "init",
                          "temperature", "alpha", "kl_order", "share_point", "arch", "mode"});
}

}  // namespace

Ini Ini::parse(std::string_view text, const std::string& context) {
  Ini ini;
  ini.context_ = context;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = context + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      ini.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (ini.sections_[section].count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    ini.sections_[section][key] = value;
  }
  return ini;
}

Ini Ini::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool Ini::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key);
}

std::string Ini::get(const std::string& section, const std::string& key, const std::string& fallback) const {
  if (!has(section, key)) return fallback;
  return sections_.at(section).at(key);
}

double Ini::number(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  const auto& text = sections_.at(section).at(key);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError(context_ + ": [" + section + "] " + key + " = '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t Ini::integer(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const auto& text = sections_.at(section).at(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(context_ + ": [" + section + "] " + key + " = '" + text + "' is not a non-negative integer");
  }
  return v;
}

void Ini::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

void Ini::require_known(const std::string& section, std::initializer_list<std::string_view> known) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return;
  for (const auto& [key, value] : s->second) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(context_ + ": unknown key '" + key + "' in [" + section + "]");
    }
  }
}

std::string Ini::to_text() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    if (!section.empty()) out += "[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
    out += "\n";
  }
  return out;
}

RunConfig RunConfig::defaults() { return from_ini(Ini{}); }

RunConfig RunConfig::from_ini(const Ini& ini) {
  ini.require_known("run", {"seed"});
  ini.require_known("data", {"source", "image_size", "shape_noise", "n_per_class", "eval_per_class", "suite_per_class",
                             "seed", "idx_images", "idx_labels", "downsample", "threshold"});
  for (const char* sec : {"teacher", "finetune", "distill"}) require_train_keys(ini, sec);
  for (const auto& [name, keys] : ini.sections()) {
    if (name != "run" && name != "data" && name != "teacher" && name != "finetune" && name != "distill") {
      throw ConfigError("unknown section [" + name + "] (expected run, data, teacher, finetune, distill)");
    }
  }

  RunConfig c;
  c.seed = ini.integer("run", "seed", 0);

  auto& d = c.data;
  const auto source = ini.get("data", "source", "synthetic");
  if (source != "synthetic" && source != "fashionmnist") {
    throw ConfigError("[data] source must be synthetic|fashionmnist, got '" + source + "'");
  }
  d.colored.source = source == "synthetic" ? data::SourceKind::synthetic_shapes : data::SourceKind::fashionmnist;
  d.colored.image_size = ini.integer("data", "image_size", d.colored.image_size);
  d.colored.shape_noise = static_cast<float>(ini.number("data", "shape_noise", d.colored.shape_noise));
  d.colored.idx_images = ini.get("data", "idx_images", "");
  d.colored.idx_labels = ini.get("data", "idx_labels", "");
  d.colored.downsample = ini.integer("data", "downsample", d.colored.downsample);
  d.colored.foreground_threshold = static_cast<float>(ini.number("data", "threshold", d.colored.foreground_threshold));
  d.n_per_class = ini.integer("data", "n_per_class", d.n_per_class);
  d.eval_per_class = ini.integer("data", "eval_per_class", d.eval_per_class);
  d.suite_per_class = ini.integer("data", "suite_per_class", d.suite_per_class);
  d.seed = ini.integer("data", "seed", c.seed);

  const std::size_t side = d.colored.source == data::SourceKind::synthetic_shapes
                               ? d.colored.image_size
                               : 28 / std::max<std::size_t>(d.colored.downsample, 1);
  const std::string hw = std::to_string(side) + "x" + std::to_string(side);
  auto& f = c.daft;
  try {
    f.teacher_arch = nn::Architecture::parse(ini.get("teacher", "arch", "cnn:3x" + hw + ":16,32:32:2"));
    f.student_arch = nn::Architecture::parse(ini.get("distill", "arch", "cnn:3x" + hw + ":8,16:16:2"));
    f.mode = pipelines::parse_teacher_mode(ini.get("distill", "mode", "multi"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  // Desk-scale stage defaults; every value can be overridden per section.
  f.teacher.steps = 1000;
  f.finetune.steps = 300;
  f.finetune.perturb.epsilon = 0.25f;
  f.finetune.perturb.step_size = 0.125f;
  f.finetune.perturb.steps = 3;
  f.finetune.distill.smooth_weight = 1.0f;
  f.distill.steps = 1000;
  read_train_section(ini, "teacher", c.seed, kTeacherStream, f.teacher);
  read_train_section(ini, "finetune", c.seed, kFinetuneStream, f.finetune);
  read_train_section(ini, "distill", c.seed, kDistillStream, f.distill);
  f.seed = c.seed;
  return c;
}

Ini RunConfig::to_ini() const {
  Ini ini;
  ini.set("run", "seed", std::to_string(seed));
  const auto& o = data.colored;
  ini.set("data", "source", o.source == data::SourceKind::synthetic_shapes ? "synthetic" : "fashionmnist");
  ini.set("data", "image_size", std::to_string(o.image_size));
  ini.set("data", "shape_noise", format_number(o.shape_noise));
  ini.set("data", "threshold", format_number(o.foreground_threshold));
  if (!o.idx_images.empty()) ini.set("data", "idx_images", o.idx_images);
  if (!o.idx_labels.empty()) ini.set("data", "idx_labels", o.idx_labels);
  ini.set("data", "downsample", std::to_string(o.downsample));
  ini.set("data", "n_per_class", std::to_string(data.n_per_class));
  ini.set("data", "eval_per_class", std::to_string(data.eval_per_class));
  ini.set("data", "suite_per_class", std::to_string(data.suite_per_class));
  ini.set("data", "seed", std::to_string(data.seed));
  write_train_section(ini, "teacher", daft.teacher);
  write_train_section(ini, "finetune", daft.finetune);
  write_train_section(ini, "distill", daft.distill);
  ini.set("teacher", "arch", daft.teacher_arch.to_string());
  ini.set("distill", "arch", daft.student_arch.to_string());
  ini.set("distill", "mode", pipelines::to_string(daft.mode));
  return ini;
}

std::string config_hash(const Ini& ini) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : ini.to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace daft::harness
