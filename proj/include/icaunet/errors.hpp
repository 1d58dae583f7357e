#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace icaunet {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the autodiff graph is used in an invalid order, e.g. a second
// backward through an already released graph.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric has no defined value for the given inputs (e.g. Hausdorff distance of
// an empty set). Callers report it as missing.
class MetricUndefined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed ICAV/ICAC file. `offset()` is the byte position at which the
// reader detected the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace icaunet
