#include "pcnet/error.hpp"

namespace pcnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateGeometry:
      return "DegenerateGeometry";
    case ErrorCode::NonConvergence:
      return "NonConvergence";
    case ErrorCode::InvalidMeasurement:
      return "InvalidMeasurement";
    case ErrorCode::ParseError:
      return "ParseError";
    case ErrorCode::SchemaError:
      return "SchemaError";
    case ErrorCode::AlignmentError:
      return "AlignmentError";
    case ErrorCode::IoError:
      return "IoError";
    case ErrorCode::InsufficientSatellites:
      return "InsufficientSatellites";
    case ErrorCode::SingularGeometry:
      return "SingularGeometry";
    case ErrorCode::UnconvergedFix:
      return "UnconvergedFix";
    case ErrorCode::MissingGroundTruth:
      return "MissingGroundTruth";
    case ErrorCode::SanityBound:
      return "SanityBound";
    case ErrorCode::DegenerateInput:
      return "DegenerateInput";
    case ErrorCode::EmptySet:
      return "EmptySet";
    case ErrorCode::CacheMismatch:
      return "CacheMismatch";
    case ErrorCode::EmptyDataset:
      return "EmptyDataset";
    case ErrorCode::NoLabels:
      return "NoLabels";
    case ErrorCode::VersionMismatch:
      return "VersionMismatch";
    case ErrorCode::CorruptFile:
      return "CorruptFile";
    case ErrorCode::ConfigError:
      return "ConfigError";
    case ErrorCode::EmptyInput:
      return "EmptyInput";
    case ErrorCode::UsageError:
      return "UsageError";
  }
  return "Unknown";
}

}  // namespace pcnet
