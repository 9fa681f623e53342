#include "rulsurv/error.hpp"

namespace rulsurv {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::DegeneratePath: return "DegeneratePath";
    case ErrorCode::DepthTooLarge: return "DepthTooLarge";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::DegenerateDurations: return "DegenerateDurations";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::UnfittedModel: return "UnfittedModel";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::DegenerateTime: return "DegenerateTime";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DepthTooLarge:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ConfigError:
      return ErrorClass::Config;
    case ErrorCode::ShapeMismatch:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonConvergence:
    case ErrorCode::UnfittedModel:
      return ErrorClass::Numeric;
    default:
      return ErrorClass::Data;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace rulsurv
