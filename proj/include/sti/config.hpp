#pragma once

// Sectioned key/value text files:
//
//   # comment
//   [section]
//   key = value
//
// Sections may repeat; their order is kept. Errors carry line numbers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

class ConfigSection {
 public:
  ConfigSection(std::string name, int line) : name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }
  const std::vector<ConfigEntry>& entries() const { return entries_; }
  void add(ConfigEntry e) { entries_.push_back(std::move(e)); }

  bool has(std::string_view key) const { return find(key) != nullptr; }
  const ConfigEntry* find(std::string_view key) const;

  std::string get_string(std::string_view key) const;
  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key) const;
  long long get_int(std::string_view key, long long fallback) const;
  Vec3 get_vec3(std::string_view key) const;
  std::optional<Vec3> get_vec3_opt(std::string_view key) const;

  // Throws for any key outside `allowed`, naming its line.
  void require_known(std::initializer_list<std::string_view> allowed) const;

 private:
  std::string name_;
  int line_;
  std::vector<ConfigEntry> entries_;
};

struct Config {
  std::vector<ConfigSection> sections;

  const ConfigSection* first(std::string_view name) const;
};

// With `implicit_section`, entries before the first header belong to a
// section of that name instead of being an error.
Config parse_config(std::string_view text, std::string_view implicit_section = {});

}  // namespace sti
