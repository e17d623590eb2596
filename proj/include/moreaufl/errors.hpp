#pragma once

#include <stdexcept>
#include <string>

namespace moreaufl {

// A solver or local update produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input bytes (IDX files, dataset containers).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Could not satisfy partition size constraints.
class PartitionError : public std::runtime_error {
 public:
  explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace moreaufl
