#include "nle/error.hpp"

namespace nle {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::NoKnownWords: return "NoKnownWords";
    case ErrorCode::BadInput: return "BadInput";
    case ErrorCode::NonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::MissingPart: return "MissingPart";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::UnresolvedSlot: return "UnresolvedSlot";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::AllMetricsUndefined: return "AllMetricsUndefined";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::BadAlpha: return "BadAlpha";
    case ErrorCode::BadP: return "BadP";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::UnmappableCandidate: return "UnmappableCandidate";
    case ErrorCode::CacheIoError: return "CacheIoError";
    case ErrorCode::AnswerNotInChoices: return "AnswerNotInChoices";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::PairingMismatch: return "PairingMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SchemaVersion: return "SchemaVersion";
    case ErrorCode::FailureBudget: return "FailureBudget";
  }
  return "Unknown";
}

}  // namespace nle
