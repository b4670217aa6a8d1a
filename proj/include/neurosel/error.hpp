#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neurosel {

enum class ErrorCode {
  // configuration / argument errors
  ConfigError,
  FractionOutOfRange,
  KOutOfRange,
  JTooSmall,
  BudgetTooSmall,
  NoSources,
  // data errors
  IoError,
  MagicMismatch,
  DimensionMismatch,
  NonFiniteActivation,
  LabelError,
  EmptyDataset,
  TooFewExamples,
  SingleClassError,
  IncompatibleSelection,
  IncompatibleSources,
  LengthMismatch,
  ShapeMismatch,
  IdOutOfRange,
  LayerCountMismatch,
  EmptyTuneSample,
  // numeric failures
  ZeroVector,
  NonConvergence,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::JTooSmall: return "JTooSmall";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::NoSources: return "NoSources";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::LabelError: return "LabelError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::SingleClassError: return "SingleClassError";
    case ErrorCode::IncompatibleSelection: return "IncompatibleSelection";
    case ErrorCode::IncompatibleSources: return "IncompatibleSources";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::LayerCountMismatch: return "LayerCountMismatch";
    case ErrorCode::EmptyTuneSample: return "EmptyTuneSample";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonConvergence: return "NonConvergence";
  }
  return "Unknown";
}

enum class ErrorCategory { Config, Data, Numeric };

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::FractionOutOfRange:
    case ErrorCode::KOutOfRange:
    case ErrorCode::JTooSmall:
    case ErrorCode::BudgetTooSmall:
    case ErrorCode::NoSources:
      return ErrorCategory::Config;
    case ErrorCode::ZeroVector:
    case ErrorCode::NonConvergence:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace neurosel
