#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aad {

enum class ErrorCode {
  BadMagic,
  TruncatedPayload,
  MissingSidecar,
  IoFailure,
  NonFiniteData,
  ShapeMismatch,
  RateMismatch,
  WindowTooShort,
  NotMono,
  RateTooLow,
  InvalidBand,
  RankDeficient,
  NoPositiveMass,
  NotPositiveDefinite,
  ConvergenceFailure,
  DegenerateLabels,
  SingleClass,
  DegenerateCovariance,
  ZeroSpread,
  Collapse,
  InvalidProfile,
  Unreachable,
  SingleClassTruth,
  AllZeroDifferences,
  InvalidArgument,
  UsageError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::MissingSidecar: return "MissingSidecar";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::NotMono: return "NotMono";
    case ErrorCode::RateTooLow: return "RateTooLow";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NoPositiveMass: return "NoPositiveMass";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::ZeroSpread: return "ZeroSpread";
    case ErrorCode::Collapse: return "Collapse";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::SingleClassTruth: return "SingleClassTruth";
    case ErrorCode::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a stable code next to the
/// human-readable message, so callers (and the CLI) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace aad
