#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kbsql {

enum class ErrorCode {
  MissingName,
  MalformedTag,
  InvalidSource,
  UnknownComposer,
  UnknownTrigger,
  ImmutableField,
  DuplicateLiveId,
  UnknownId,
  InvalidVersion,
  EmptyPattern,
  ProviderUnavailable,
  UnknownSlot,
  MissingAnnotations,
  EmptyIndex,
  PreconditionViolation,
  EmptyQuery,
  UnknownColumn,
  ConnectionFailed,
  EmptyRow,
  UnparsableSql,
  NoSqlInResponse,
  AllCandidatesFailed,
  DeadlineWithNoCandidate,
  IndexUnavailable,
  GoldSqlFails,
  BudgetExhausted,
  SqlFails,
  NetworkDenied,
  Io,
  Parse,
  Config,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kbsql
