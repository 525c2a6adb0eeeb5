#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcnet {

enum class ErrorCode {
  DegenerateGeometry,
  NonConvergence,
  InvalidMeasurement,
  ParseError,
  SchemaError,
  AlignmentError,
  IoError,
  InsufficientSatellites,
  SingularGeometry,
  UnconvergedFix,
  MissingGroundTruth,
  SanityBound,
  DegenerateInput,
  EmptySet,
  CacheMismatch,
  EmptyDataset,
  NoLabels,
  VersionMismatch,
  CorruptFile,
  ConfigError,
  EmptyInput,
  UsageError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above; the
/// CLI prints it as `error: <Code>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pcnet
