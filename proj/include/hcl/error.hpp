#pragma once

#include <stdexcept>
#include <string>

namespace hcl {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  OutOfRange,
  NonFinite,
  MissingGroundTruth,
  MissingPredictions,
  UnknownSample,
  Conflict,
  IncompleteRun,
  Infeasible,
  Precondition,
  Io,
  Format,
  Config,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hcl
