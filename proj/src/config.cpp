#include "sti/config.hpp"

#include <sstream>

#include "sti/file_util.hpp"

namespace sti {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw InputError("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const ConfigEntry& e, const std::string& token) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(e.line, "'" + e.key + "' expects a number, got '" + token + "'");
  }
}

}  // namespace

const ConfigEntry* ConfigSection::find(std::string_view key) const {
  const ConfigEntry* hit = nullptr;
  for (const auto& e : entries_)
    if (e.key == key) hit = &e;  // last assignment wins
  return hit;
}

std::string ConfigSection::get_string(std::string_view key) const {
  const auto* e = find(key);
  if (!e) fail(line_, "[" + name_ + "] is missing '" + std::string(key) + "'");
  return e->value;
}

double ConfigSection::get_double(std::string_view key) const {
  const auto* e = find(key);
  if (!e) fail(line_, "[" + name_ + "] is missing '" + std::string(key) + "'");
  return to_double(*e, e->value);
}

double ConfigSection::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long ConfigSection::get_int(std::string_view key) const {
  const auto* e = find(key);
  if (!e) fail(line_, "[" + name_ + "] is missing '" + std::string(key) + "'");
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(e->line, "'" + e->key + "' expects an integer");
  }
}

long long ConfigSection::get_int(std::string_view key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

Vec3 ConfigSection::get_vec3(std::string_view key) const {
  const auto* e = find(key);
  if (!e) fail(line_, "[" + name_ + "] is missing '" + std::string(key) + "'");
  const auto tok = split_ws(e->value);
  if (tok.size() != 3) fail(e->line, "'" + e->key + "' expects 3 numbers");
  return {to_double(*e, tok[0]), to_double(*e, tok[1]), to_double(*e, tok[2])};
}

std::optional<Vec3> ConfigSection::get_vec3_opt(std::string_view key) const {
  if (!has(key)) return std::nullopt;
  return get_vec3(key);
}

void ConfigSection::require_known(std::initializer_list<std::string_view> allowed) const {
  for (const auto& e : entries_) {
    bool ok = false;
    for (auto a : allowed) ok = ok || e.key == a;
    if (!ok) fail(e.line, "unknown key '" + e.key + "' in [" + name_ + "]");
  }
}

const ConfigSection* Config::first(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name() == name) return &s;
  return nullptr;
}

Config parse_config(std::string_view text, std::string_view implicit_section) {
  Config cfg;
  if (!implicit_section.empty()) cfg.sections.emplace_back(std::string(implicit_section), 0);
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto c = raw.find_first_of("#;"); c != std::string::npos) raw.resize(c);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(lineno, "unterminated section header");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) fail(lineno, "empty section name");
      cfg.sections.emplace_back(name, lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
    if (cfg.sections.empty()) fail(lineno, "entry outside of any [section]");
    ConfigEntry e{trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)),
                  lineno};
    if (e.key.empty()) fail(lineno, "empty key");
    cfg.sections.back().add(std::move(e));
  }
  return cfg;
}

}  // namespace sti
