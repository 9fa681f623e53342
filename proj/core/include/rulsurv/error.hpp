#pragma once

#include <stdexcept>
#include <string>

namespace rulsurv {

enum class ErrorCode {
  // ingest
  MissingFile,
  MalformedRow,
  EmptySample,
  EmptyTrace,
  // signature
  DegeneratePath,
  DepthTooLarge,
  // survdata
  InvalidRecord,
  TooFewRecords,
  DegenerateDurations,
  // nn / models
  ShapeMismatch,
  NonFiniteLoss,
  NoEvents,
  NonConvergence,
  GridMismatch,
  UnfittedModel,
  // metrics
  NoComparablePairs,
  DegenerateTime,
  // shared
  InvalidArgument,
  FormatError,
  ConfigError,
};

/// Coarse failure class; the CLI maps these onto exit codes 2/3/4.
enum class ErrorClass { Config, Data, Numeric };

const char* to_string(ErrorCode code) noexcept;
ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return classify(code_); }

 private:
  ErrorCode code_;
};

}  // namespace rulsurv
