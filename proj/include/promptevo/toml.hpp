#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace promptevo::toml {

// The subset of TOML run configs actually use: [section] tables of
// key = value pairs where a value is a string, integer, float, boolean or an
// array of strings. Comments start with '#'.
using Value =
    std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;

struct Table {
  // section -> key -> value; top-level keys live under the "" section.
  std::map<std::string, std::map<std::string, Value>> sections;

  bool has(const std::string& section, const std::string& key) const;
  const Value* find(const std::string& section, const std::string& key) const;
};

Table parse(const std::string& text);

// Renders sections and keys in sorted order; parse(render(t)) == t.
std::string render(const Table& table);

std::string render_value(const Value& value);

}  // namespace promptevo::toml
