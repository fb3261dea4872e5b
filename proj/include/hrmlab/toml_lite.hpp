#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hrmlab {

// Small TOML subset: [section] / [dotted.section] headers, key = value pairs
// with strings, integers, floats, booleans and flat arrays of those, plus #
// comments. Covers the plan/model files this project reads; anything fancier
// (dates, inline tables, multiline strings) is rejected with a line number.
class TomlValue {
 public:
  enum class Kind { String, Integer, Float, Boolean, Array };

  Kind kind = Kind::String;
  std::string str;
  std::int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<TomlValue> array;

  // Numeric coercion: integers read fine where a float is expected.
  double as_number() const;
};

class TomlTable {
 public:
  // Throws ParseError with a line number on malformed input.
  static TomlTable parse(const std::string& text);
  static TomlTable parse_file(const std::string& path);

  bool has(const std::string& dotted_key) const;

  // All getters throw ConfigError when the key is missing or has the
  // wrong type. *_or variants return the fallback when the key is absent.
  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  std::string get_string_or(const std::string& key, const std::string& fb) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fb) const;
  double get_double_or(const std::string& key, double fb) const;
  bool get_bool_or(const std::string& key, bool fb) const;

  // Section names (one level under `prefix`), e.g. sections under
  // "regions" for keys "regions.heap.size_gb".
  std::vector<std::string> subsections(const std::string& prefix) const;

  // Every key in file order; canonical form for hashing.
  std::string canonical() const;

  const std::map<std::string, TomlValue>& entries() const { return entries_; }

 private:
  const TomlValue* find(const std::string& key) const;

  std::map<std::string, TomlValue> entries_;
  std::vector<std::string> order_;
};

}  // namespace hrmlab
