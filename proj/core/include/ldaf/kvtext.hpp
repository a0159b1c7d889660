#pragma once

// Flat "key = value" text documents: one entry per line, '#' starts a
// comment line, keys are unique. Doubles are written in the shortest form
// that parses back to the same bits.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ldaf {

std::string format_double(double x);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

class KvDocument {
 public:
  static KvDocument parse(std::string_view text);
  static KvDocument load(const std::string& path);

  void set(const std::string& key, std::string value);
  void set_double(const std::string& key, double value) { set(key, format_double(value)); }
  void set_int(const std::string& key, long long value) { set(key, std::to_string(value)); }

  [[nodiscard]] bool has(std::string_view key) const;
  [[nodiscard]] const std::string& get(std::string_view key) const;
  [[nodiscard]] double get_double(std::string_view key) const;
  [[nodiscard]] long long get_int(std::string_view key) const;

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }
  [[nodiscard]] std::string str() const;
  void save(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace ldaf
