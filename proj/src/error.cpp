#include "ustat/error.hpp"

namespace ustat {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnsupportedMethod: return "UnsupportedMethod";
    case ErrorCode::OrderOutOfRange: return "OrderOutOfRange";
    case ErrorCode::SampleTooSmall: return "SampleTooSmall";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::CapOutOfRange: return "CapOutOfRange";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::CovarianceNotPSD: return "CovarianceNotPSD";
    case ErrorCode::DegeneracyCheckFailed: return "DegeneracyCheckFailed";
    case ErrorCode::W1Violation: return "W1Violation";
    case ErrorCode::EnvelopeIncomplete: return "EnvelopeIncomplete";
    case ErrorCode::InfiniteMomentNorm: return "InfiniteMomentNorm";
    case ErrorCode::SumConstraintViolated: return "SumConstraintViolated";
    case ErrorCode::DegeneratePosition: return "DegeneratePosition";
    case ErrorCode::OptimizerBoundsMissing: return "OptimizerBoundsMissing";
    case ErrorCode::B1Violation: return "B1Violation";
    case ErrorCode::MissingAnalyticFields: return "MissingAnalyticFields";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ustat
