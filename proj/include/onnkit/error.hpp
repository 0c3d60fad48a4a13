#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace onnkit {

enum class ErrorCode {
  ShapeMismatch,
  SizeMismatch,
  EmptyAxis,
  NonScalarRoot,
  DetachedRoot,
  NonFiniteValue,
  NonFiniteGradient,
  NonFiniteLoss,
  IndivisibleExtent,
  ZeroFactor,
  DuplicateName,
  ShapeContractViolation,
  UnknownOperator,
  UnknownOptimizer,
  CorruptState,
  VersionMismatch,
  ConstantTarget,
  IoError,
  MissingPair,
  UnsupportedFormat,
  TooFewSamples,
  ParseError,
  ValidationError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptyAxis: return "EmptyAxis";
    case ErrorCode::NonScalarRoot: return "NonScalarRoot";
    case ErrorCode::DetachedRoot: return "DetachedRoot";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IndivisibleExtent: return "IndivisibleExtent";
    case ErrorCode::ZeroFactor: return "ZeroFactor";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ShapeContractViolation: return "ShapeContractViolation";
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::UnknownOptimizer: return "UnknownOptimizer";
    case ErrorCode::CorruptState: return "CorruptState";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConstantTarget: return "ConstantTarget";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

}  // namespace onnkit
