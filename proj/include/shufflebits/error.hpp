#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shufflebits {

enum class ErrorCode {
  DuplicatePosition,
  OutOfRange,
  InvalidKeyText,
  EntropyUnavailable,
  IndexOutOfRange,
  InvalidNonce,
  ModeMismatch,
  ShapeMismatch,
  EmptyBatch,
  DimensionMismatch,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  InvalidHeader,
  LengthMismatch,
  ChecksumMismatch,
  LengthChanged,
  InvalidProportions,
  MissingClass,
  InvalidArgument,
  DegenerateFeatures,
  DimMismatch,
  ZeroVector,
  ProfileLengthInvalid,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicatePosition: return "DuplicatePosition";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidKeyText: return "InvalidKeyText";
    case ErrorCode::EntropyUnavailable: return "EntropyUnavailable";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidNonce: return "InvalidNonce";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::InvalidHeader: return "InvalidHeader";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::LengthChanged: return "LengthChanged";
    case ErrorCode::InvalidProportions: return "InvalidProportions";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateFeatures: return "DegenerateFeatures";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ProfileLengthInvalid: return "ProfileLengthInvalid";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace shufflebits
