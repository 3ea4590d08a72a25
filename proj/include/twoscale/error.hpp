#pragma once

#include <atomic>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace twoscale {

enum class ErrorCode {
  GeometryInvalid,
  MeshingFailed,
  MeshFormat,
  Precondition,
  DimensionMismatch,
  MissingPairs,
  DoubleConstraint,
  SingularMatrix,
  ResidualTooLarge,
  CoercivityViolated,
  EnergyBoundViolated,
  PositivityViolated,
  NonPositiveTensor,
  SubdomainMisaligned,
  ConfigInvalid,
  ExpressionSyntax,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::GeometryInvalid: return "GeometryInvalid";
    case ErrorCode::MeshingFailed: return "MeshingFailed";
    case ErrorCode::MeshFormat: return "MeshFormat";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingPairs: return "MissingPairs";
    case ErrorCode::DoubleConstraint: return "DoubleConstraint";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorCode::CoercivityViolated: return "CoercivityViolated";
    case ErrorCode::EnergyBoundViolated: return "EnergyBoundViolated";
    case ErrorCode::PositivityViolated: return "PositivityViolated";
    case ErrorCode::NonPositiveTensor: return "NonPositiveTensor";
    case ErrorCode::SubdomainMisaligned: return "SubdomainMisaligned";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ExpressionSyntax: return "ExpressionSyntax";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& what_message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

namespace log {

inline std::atomic<bool>& verbose() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void warn(std::string_view tag, const std::string& message) {
  if (verbose()) std::clog << "[warning:" << tag << "] " << message << '\n';
}

inline void info(const std::string& message) {
  if (verbose()) std::clog << "[info] " << message << '\n';
}

}  // namespace log
}  // namespace twoscale
