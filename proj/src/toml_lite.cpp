#include "hrmlab/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hrmlab/errors.hpp"

namespace hrmlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw ParseError("toml: line " + std::to_string(line) + ": " + what);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool in_str = false, esc = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (esc)
        esc = false;
      else if (c == '\\')
        esc = true;
      else if (c == '"')
        in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

TomlValue parse_scalar(const std::string& raw, int line) {
  TomlValue v;
  std::string t = trim(raw);
  if (t.empty()) fail(line, "empty value");
  if (t.front() == '"') {
    std::string out;
    std::size_t i = 1;
    bool closed = false;
    while (i < t.size()) {
      char c = t[i];
      if (c == '"') {
        closed = true;
        ++i;
        break;
      }
      if (c == '\\') {
        if (i + 1 >= t.size()) fail(line, "unterminated string");
        switch (t[i + 1]) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(line, "unsupported escape");
        }
        i += 2;
      } else {
        out += c;
        ++i;
      }
    }
    if (!closed) fail(line, "unterminated string");
    if (i != t.size()) fail(line, "trailing characters after string");
    v.kind = TomlValue::Kind::String;
    v.str = out;
    return v;
  }
  if (t == "true" || t == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = (t == "true");
    return v;
  }
  // Number: integer if it parses fully as one, else float.
  {
    std::int64_t iv = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), iv);
    if (ec == std::errc() && p == t.data() + t.size()) {
      v.kind = TomlValue::Kind::Integer;
      v.integer = iv;
      return v;
    }
  }
  {
    errno = 0;
    char* end = nullptr;
    double d = std::strtod(t.c_str(), &end);
    if (end == t.c_str() + t.size() && errno == 0) {
      v.kind = TomlValue::Kind::Float;
      v.real = d;
      return v;
    }
  }
  fail(line, "unrecognized value '" + t + "'");
}

TomlValue parse_value(const std::string& raw, int line) {
  std::string t = trim(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') fail(line, "unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::Array;
    std::string body = t.substr(1, t.size() - 2);
    std::string cur;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!trim(cur).empty()) v.array.push_back(parse_scalar(cur, line));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) v.array.push_back(parse_scalar(cur, line));
    return v;
  }
  return parse_scalar(raw, line);
}

bool valid_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.';
}

}  // namespace

double TomlValue::as_number() const {
  if (kind == Kind::Integer) return static_cast<double>(integer);
  if (kind == Kind::Float) return real;
  throw ConfigError("toml: value is not numeric");
}

TomlTable TomlTable::parse(const std::string& text) {
  TomlTable out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::vector<std::string> seen_sections;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(lineno, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) fail(lineno, "empty section name");
      for (char c : section)
        if (!valid_key_char(c)) fail(lineno, "bad section name");
      for (const auto& s : seen_sections)
        if (s == section) fail(lineno, "section '" + section + "' redefined");
      seen_sections.push_back(section);
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) fail(lineno, "expected key = value");
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) fail(lineno, "empty key");
    for (char c : key)
      if (!valid_key_char(c)) fail(lineno, "bad key '" + key + "'");
    std::string full = section.empty() ? key : section + "." + key;
    if (out.entries_.count(full)) fail(lineno, "duplicate key '" + full + "'");
    out.entries_[full] = parse_value(t.substr(eq + 1), lineno);
    out.order_.push_back(full);
  }
  return out;
}

TomlTable TomlTable::parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("toml: cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

const TomlValue* TomlTable::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool TomlTable::has(const std::string& key) const { return find(key) != nullptr; }

std::string TomlTable::get_string(const std::string& key) const {
  const TomlValue* v = find(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  if (v->kind != TomlValue::Kind::String)
    throw ConfigError("key '" + key + "' is not a string");
  return v->str;
}

std::int64_t TomlTable::get_int(const std::string& key) const {
  const TomlValue* v = find(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  if (v->kind != TomlValue::Kind::Integer)
    throw ConfigError("key '" + key + "' is not an integer");
  return v->integer;
}

double TomlTable::get_double(const std::string& key) const {
  const TomlValue* v = find(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  return v->as_number();
}

bool TomlTable::get_bool(const std::string& key) const {
  const TomlValue* v = find(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  if (v->kind != TomlValue::Kind::Boolean)
    throw ConfigError("key '" + key + "' is not a boolean");
  return v->boolean;
}

std::vector<std::string> TomlTable::get_string_array(const std::string& key) const {
  const TomlValue* v = find(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  if (v->kind != TomlValue::Kind::Array)
    throw ConfigError("key '" + key + "' is not an array");
  std::vector<std::string> out;
  for (const auto& e : v->array) {
    if (e.kind != TomlValue::Kind::String)
      throw ConfigError("key '" + key + "' is not a string array");
    out.push_back(e.str);
  }
  return out;
}

std::string TomlTable::get_string_or(const std::string& key,
                                     const std::string& fb) const {
  return has(key) ? get_string(key) : fb;
}

std::int64_t TomlTable::get_int_or(const std::string& key, std::int64_t fb) const {
  return has(key) ? get_int(key) : fb;
}

double TomlTable::get_double_or(const std::string& key, double fb) const {
  return has(key) ? get_double(key) : fb;
}

bool TomlTable::get_bool_or(const std::string& key, bool fb) const {
  return has(key) ? get_bool(key) : fb;
}

std::vector<std::string> TomlTable::subsections(const std::string& prefix) const {
  std::vector<std::string> out;
  std::string want = prefix + ".";
  for (const auto& [k, v] : entries_) {
    if (k.rfind(want, 0) != 0) continue;
    std::string rest = k.substr(want.size());
    std::size_t dot = rest.find('.');
    if (dot == std::string::npos) continue;
    std::string name = rest.substr(0, dot);
    bool seen = false;
    for (const auto& s : out) seen = seen || s == name;
    if (!seen) out.push_back(name);
  }
  return out;
}

std::string TomlTable::canonical() const {
  std::ostringstream ss;
  for (const auto& [k, v] : entries_) {
    ss << k << "=";
    switch (v.kind) {
      case TomlValue::Kind::String: ss << '"' << v.str << '"'; break;
      case TomlValue::Kind::Integer: ss << v.integer; break;
      case TomlValue::Kind::Float: ss << v.real; break;
      case TomlValue::Kind::Boolean: ss << (v.boolean ? "true" : "false"); break;
      case TomlValue::Kind::Array: {
        ss << '[';
        for (std::size_t i = 0; i < v.array.size(); ++i) {
          if (i) ss << ',';
          const auto& e = v.array[i];
          if (e.kind == TomlValue::Kind::String)
            ss << '"' << e.str << '"';
          else if (e.kind == TomlValue::Kind::Integer)
            ss << e.integer;
          else if (e.kind == TomlValue::Kind::Float)
            ss << e.real;
          else
            ss << (e.boolean ? "true" : "false");
        }
        ss << ']';
        break;
      }
    }
    ss << '\n';
  }
  return ss.str();
}

}  // namespace hrmlab
