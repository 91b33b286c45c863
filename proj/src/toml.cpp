#include "promptevo/toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo::toml {

namespace {

[[noreturn]] void fail(int line, const std::string& message) {
  throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

std::string parse_quoted(std::string_view s, std::size_t& pos, int line) {
  if (pos >= s.size() || s[pos] != '"') fail(line, "expected '\"'");
  ++pos;
  std::string out;
  while (pos < s.size() && s[pos] != '"') {
    char c = s[pos];
    if (c == '\\') {
      ++pos;
      if (pos >= s.size()) fail(line, "dangling escape");
      switch (s[pos]) {
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        case 'r': c = '\r'; break;
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        default: fail(line, "unsupported escape sequence");
      }
    }
    out.push_back(c);
    ++pos;
  }
  if (pos >= s.size()) fail(line, "unterminated string");
  ++pos;  // closing quote
  return out;
}

void skip_spaces(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

Value parse_value(std::string_view s, std::size_t& pos, int line) {
  skip_spaces(s, pos);
  if (pos >= s.size()) fail(line, "missing value");

  if (s[pos] == '"') return parse_quoted(s, pos, line);

  if (s[pos] == '[') {
    ++pos;
    std::vector<std::string> items;
    for (;;) {
      skip_spaces(s, pos);
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        break;
      }
      items.push_back(parse_quoted(s, pos, line));
      skip_spaces(s, pos);
      if (pos < s.size() && s[pos] == ',') {
        ++pos;
        continue;
      }
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        break;
      }
      fail(line, "expected ',' or ']' in array");
    }
    return items;
  }

  std::size_t end = pos;
  while (end < s.size() && s[end] != '#' && s[end] != ' ' && s[end] != '\t') ++end;
  const std::string token(s.substr(pos, end - pos));
  pos = end;

  if (token == "true") return true;
  if (token == "false") return false;

  const bool looks_float = token.find('.') != std::string::npos ||
                           token.find('e') != std::string::npos ||
                           token.find('E') != std::string::npos;
  if (!looks_float) {
    std::int64_t iv = 0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), iv);
    if (ec == std::errc() && ptr == token.data() + token.size()) return iv;
  }
  double dv = 0.0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), dv);
  if (ec == std::errc() && ptr == token.data() + token.size()) return dv;

  fail(line, "cannot parse value '" + token + "'");
}

}  // namespace

bool Table::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

const Value* Table::find(const std::string& section, const std::string& key) const {
  auto sit = sections.find(section);
  if (sit == sections.end()) return nullptr;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return nullptr;
  return &kit->second;
}

Table parse(const std::string& text) {
  Table table;
  std::string current_section;
  table.sections[current_section];

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto newline = text.find('\n', start);
    const std::string_view line =
        std::string_view(text).substr(start, newline == std::string::npos
                                                  ? text.size() - start
                                                  : newline - start);
    start = newline == std::string::npos ? text.size() + 1 : newline + 1;
    ++line_no;

    std::size_t pos = 0;
    skip_spaces(line, pos);
    if (pos >= line.size() || line[pos] == '#' || line[pos] == '\r') continue;

    if (line[pos] == '[') {
      const auto close = line.find(']', pos);
      if (close == std::string_view::npos) fail(line_no, "unterminated section header");
      current_section = trim(line.substr(pos + 1, close - pos - 1));
      if (current_section.empty()) fail(line_no, "empty section name");
      table.sections[current_section];
      continue;
    }

    const auto eq = line.find('=', pos);
    if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(pos, eq - pos));
    if (key.empty()) fail(line_no, "empty key");

    std::size_t vpos = eq + 1;
    Value value = parse_value(line, vpos, line_no);
    skip_spaces(line, vpos);
    if (vpos < line.size() && line[vpos] != '#' && line[vpos] != '\r') {
      fail(line_no, "trailing characters after value");
    }
    if (!table.sections[current_section].emplace(key, std::move(value)).second) {
      fail(line_no, "duplicate key '" + key + "'");
    }
  }
  return table;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  out += "\"";
  return out;
}

std::string render_double(double v) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
  std::string out(buffer, ptr);
  // Keep floats recognizably floats.
  if (out.find('.') == std::string::npos && out.find('e') == std::string::npos &&
      out.find("inf") == std::string::npos && out.find("nan") == std::string::npos) {
    out += ".0";
  }
  return out;
}

}  // namespace

std::string render_value(const Value& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return quote(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return render_double(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else {
          std::string out = "[";
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i > 0) out += ", ";
            out += quote(v[i]);
          }
          out += "]";
          return out;
        }
      },
      value);
}

std::string render(const Table& table) {
  std::string out;
  for (const auto& [section, keys] : table.sections) {
    if (keys.empty() && section.empty()) continue;
    if (!section.empty()) {
      if (!out.empty()) out += "\n";
      out += "[" + section + "]\n";
    }
    for (const auto& [key, value] : keys) {
      out += key + " = " + render_value(value) + "\n";
    }
  }
  return out;
}

}  // namespace promptevo::toml
