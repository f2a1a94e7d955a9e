#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pfgen/errors.hpp"

namespace pfgen {

// Numeric CSV cell: 9 significant digits, round-trip stable.
inline std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// CSV sink with LF line endings regardless of platform.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary) {
    require(out_.good(), ErrorCategory::io, "cannot open for writing: " + path.string());
    path_ = path.string();
  }

  void row(std::span<const std::string> cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    require(out_.good(), ErrorCategory::io, "write failed: " + path_);
  }

  void row(std::initializer_list<std::string> cells) {
    row(std::span<const std::string>(cells.begin(), cells.size()));
  }

  void raw_line(const std::string& line) {
    out_ << line << '\n';
    require(out_.good(), ErrorCategory::io, "write failed: " + path_);
  }

  void close() { out_.close(); }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace pfgen
