#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csfusion {

enum class ErrorKind {
  kDuplicateSurface,
  kMalformedSurface,
  kReservedSurface,
  kUnknownId,
  kUnknownSurface,
  kEmptyLanguageInventory,
  kIo,
  kParseError,
  kBadFractions,
  kSpecialTokenInInput,
  kTooLong,
  kPurityViolation,
  kEmptyTrainingSet,
  kVersionMismatch,
  kShapeMismatch,
  kLengthMismatch,
  kSchemaMismatch,
  kInvalidConfig,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDuplicateSurface: return "DuplicateSurface";
    case ErrorKind::kMalformedSurface: return "MalformedSurface";
    case ErrorKind::kReservedSurface: return "ReservedSurface";
    case ErrorKind::kUnknownId: return "UnknownId";
    case ErrorKind::kUnknownSurface: return "UnknownSurface";
    case ErrorKind::kEmptyLanguageInventory: return "EmptyLanguageInventory";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kBadFractions: return "BadFractions";
    case ErrorKind::kSpecialTokenInInput: return "SpecialTokenInInput";
    case ErrorKind::kTooLong: return "TooLong";
    case ErrorKind::kPurityViolation: return "PurityViolation";
    case ErrorKind::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. `kind()` identifies the
/// failure class; `line()` is set for errors tied to a 1-based input line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(format(kind, message, line)),
        kind_(kind),
        line_(line) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  static std::string format(ErrorKind kind, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out(to_string(kind));
    if (line) out += " (line " + std::to_string(*line) + ")";
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorKind kind_;
  std::optional<std::size_t> line_;
};

}  // namespace csfusion
