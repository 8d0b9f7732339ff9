#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ustat {

enum class ErrorCode {
  InvalidArgument,
  UnsupportedMethod,
  OrderOutOfRange,
  SampleTooSmall,
  EnumerationTooLarge,
  LengthMismatch,
  CapOutOfRange,
  QuadratureNotConverged,
  CovarianceNotPSD,
  DegeneracyCheckFailed,
  W1Violation,
  EnvelopeIncomplete,
  InfiniteMomentNorm,
  SumConstraintViolated,
  DegeneratePosition,
  OptimizerBoundsMissing,
  B1Violation,
  MissingAnalyticFields,
  ConfigInvalid,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code logic) can branch on the kind of error.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ustat
