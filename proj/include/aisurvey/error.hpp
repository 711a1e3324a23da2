#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aisurvey {

enum class ErrorKind {
  Io,
  Parse,
  InvalidResponse,
  DuplicateKey,
  UnmappedOptionSet,
  UnknownLabel,
  Filter,
  EmptyQuestion,
  Alignment,
  CorruptEmbedding,
  Format,
  Config,
  Shape,
  Index,
  CacheMismatch,
  NonFinite,
  DegenerateImportance,
  Version,
  Checksum,
  Numerical,
  EmptySplit,
  Infeasible,
  UndefinedMetric,
  Singular,
  InsufficientData,
  Structural,
  Dependency,
  Usage,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; `kind()` drives CLI exit categories.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace aisurvey
