#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nle {

enum class ErrorCode {
  // text metrics
  EmptyText,
  BadOrder,
  CorpusTooSmall,
  NoKnownWords,
  // pragmatics
  BadInput,
  NonFiniteLogit,
  OutOfRange,
  ScoreOutOfRange,
  BackendError,
  // prompt engine
  MissingPart,
  KindMismatch,
  UnresolvedSlot,
  ParseError,
  DuplicateId,
  // generation / selection
  EmptyGeneration,
  NoCandidates,
  AllMetricsUndefined,
  // stats
  LengthMismatch,
  DivisionByZero,
  BadAlpha,
  BadP,
  // backends
  Timeout,
  HttpError,
  ProtocolError,
  UnmappableCandidate,
  CacheIoError,
  // datasets
  AnswerNotInChoices,
  BadLabel,
  // cli
  PairingMismatch,
  ConfigError,
  SchemaVersion,
  FailureBudget,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int http_status = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), http_status_(http_status) {}

  ErrorCode code() const noexcept { return code_; }
  /// Nonzero only for HttpError.
  int http_status() const noexcept { return http_status_; }

 private:
  ErrorCode code_;
  int http_status_;
};

inline bool is_backend_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendError:
    case ErrorCode::Timeout:
    case ErrorCode::HttpError:
    case ErrorCode::ProtocolError:
    case ErrorCode::UnmappableCandidate:
    case ErrorCode::ScoreOutOfRange:
      return true;
    default:
      return false;
  }
}

}  // namespace nle
