#include "kbsql/errors.hpp"

namespace kbsql {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingName: return "MissingName";
    case ErrorCode::MalformedTag: return "MalformedTag";
    case ErrorCode::InvalidSource: return "InvalidSource";
    case ErrorCode::UnknownComposer: return "UnknownComposer";
    case ErrorCode::UnknownTrigger: return "UnknownTrigger";
    case ErrorCode::ImmutableField: return "ImmutableField";
    case ErrorCode::DuplicateLiveId: return "DuplicateLiveId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::InvalidVersion: return "InvalidVersion";
    case ErrorCode::EmptyPattern: return "EmptyPattern";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::UnknownSlot: return "UnknownSlot";
    case ErrorCode::MissingAnnotations: return "MissingAnnotations";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::ConnectionFailed: return "ConnectionFailed";
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::UnparsableSql: return "UnparsableSql";
    case ErrorCode::NoSqlInResponse: return "NoSqlInResponse";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::DeadlineWithNoCandidate: return "DeadlineWithNoCandidate";
    case ErrorCode::IndexUnavailable: return "IndexUnavailable";
    case ErrorCode::GoldSqlFails: return "GoldSqlFails";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SqlFails: return "SqlFails";
    case ErrorCode::NetworkDenied: return "NetworkDenied";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace kbsql
