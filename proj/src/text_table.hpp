#pragma once

// Whitespace-separated text reader with file:line diagnostics.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "io_util.hpp"

namespace trackcouple::detail {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(open_in(path, false)) {}

  // Next non-empty, non-comment line split on whitespace.
  std::optional<std::vector<std::string>> next_fields() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream ss(line);
      std::vector<std::string> fields;
      std::string f;
      while (ss >> f) fields.push_back(f);
      return fields;
    }
    return std::nullopt;
  }

  [[noreturn]] void fail(const std::string& what) const { format_error(path_, line_no_, what); }

  int to_int(const std::string& s) const {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("not an integer: '" + s + "'");
    return v;
  }

  double to_double(const std::string& s) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("not a number: '" + s + "'");
    return v;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace trackcouple::detail
