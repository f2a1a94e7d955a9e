#pragma once

#include <stdexcept>
#include <string>

namespace pfgen {

// Failure categories surfaced by the CLI; config/io/diverged/metric map to
// dedicated exit codes, the rest indicate misuse or bugs.
enum class ErrorCategory {
  config,     // bad configuration or arguments
  io,         // file system, serialization, checksum failures
  dimension,  // tensor shape/rank violations
  domain,     // value outside a function's mathematical domain
  diverged,   // non-finite values during training or sampling
  metric,     // undefined metric (e.g. zero-norm reference)
  internal,   // broken internal invariant
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::diverged: return "diverged";
    case ErrorCategory::metric: return "metric";
    case ErrorCategory::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) {
  throw Error(c, msg);
}

inline void require(bool cond, ErrorCategory c, const std::string& msg) {
  if (!cond) fail(c, msg);
}

}  // namespace pfgen
