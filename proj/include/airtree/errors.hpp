#pragma once

#include <stdexcept>
#include <string>

namespace airtree {

// Error taxonomy maps onto the CLI exit codes:
//   UsageError       -> 1 (bad flags, invalid configuration)
//   DataError        -> 2 (unreadable/empty datasets, corrupt artifacts, stale fingerprints)
//   CorrectnessError -> 3 (benchmark result-equality gate tripped)
// Input-domain violations (non-finite coordinates, malformed rects) throw
// std::invalid_argument.

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CorrectnessError : std::runtime_error {
  explicit CorrectnessError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace airtree
