#include "ldaf/kvtext.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ldaf/error.hpp"

namespace ldaf {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  require(res.ec == std::errc{} && res.ptr == text.data() + text.size(), ErrorKind::Format,
          std::string(what) + ": not a number: '" + std::string(text) + "'");
  return x;
}

long long parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  long long x = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  require(res.ec == std::errc{} && res.ptr == text.data() + text.size(), ErrorKind::Format,
          std::string(what) + ": not an integer: '" + std::string(text) + "'");
  return x;
}

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorKind::Format,
            "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    require(!key.empty(), ErrorKind::Format, "line " + std::to_string(line_no) + ": empty key");
    require(!doc.has(key), ErrorKind::Format,
            "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    doc.entries_.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

KvDocument KvDocument::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KvDocument::set(const std::string& key, std::string value) {
  require(value.find('\n') == std::string::npos, ErrorKind::InvalidArgument,
          "value for '" + key + "' contains a newline");
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

bool KvDocument::has(std::string_view key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

const std::string& KvDocument::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  fail(ErrorKind::Format, "missing key '" + std::string(key) + "'");
}

double KvDocument::get_double(std::string_view key) const { return parse_double(get(key), key); }

long long KvDocument::get_int(std::string_view key) const { return parse_int(get(key), key); }

std::string KvDocument::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void KvDocument::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  out << str();
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace ldaf
