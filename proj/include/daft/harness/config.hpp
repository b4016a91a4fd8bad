#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "daft/data/colored.hpp"
#include "daft/pipelines.hpp"

namespace daft::harness {

/// Malformed or inconsistent configuration; a usage error.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat key = value text grouped into [section]s. Keys outside any section
/// belong to the "" section. '#' and ';' start comments.
class Ini {
 public:
  static Ini parse(std::string_view text, const std::string& context = "config");
  static Ini load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double number(const std::string& section, const std::string& key, double fallback) const;
  std::uint64_t integer(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  void set(const std::string& section, const std::string& key, std::string value);

  /// Keys of `section` not listed in `known`, which callers reject as typos.
  void require_known(const std::string& section, std::initializer_list<std::string_view> known) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }
  /// Canonical text: sections and keys sorted, one "key = value" per line.
  std::string to_text() const;

 private:
  std::string context_ = "config";
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// How the colored data of a run is generated.
struct DataSpec {
  data::ColoredOptions colored;
  std::size_t n_per_class = 1000;       // training rows per class
  std::size_t eval_per_class = 250;     // ID and OOD evaluation rows per class
  std::size_t suite_per_class = 200;    // per class and domain for the domain suite
  std::uint64_t seed = 0;
};

/// Everything a single run needs. One file fully determines it.
struct RunConfig {
  std::uint64_t seed = 0;
  DataSpec data;
  pipelines::DaftConfig daft;

  static RunConfig defaults();
  static RunConfig from_ini(const Ini& ini);
  Ini to_ini() const;
};

/// Stable hex digest of the canonical text of `ini`.
std::string config_hash(const Ini& ini);

}  // namespace daft::harness
