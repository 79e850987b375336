#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdmatch {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  ZeroVector,
  EmptyInput,
  EmptyText,
  BackendUnavailable,
  DuplicateProvider,
  UnknownProvider,
  ProviderUnavailable,
  UnsupportedLanguage,
  ParseError,
  DuplicateId,
  UnknownReview,
  UnknownIssue,
  AuthFailure,
  NetworkFailure,
  RateLimited,
  NoEmbeddings,
  MissingResult,
  EmptyGoldSet,
  SchemaMismatch,
  WorkspaceLocked,
  Storage,
};

/// Stable snake_case name, used in JSON error bodies.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure pinned to a 1-based line of the input file.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace crowdmatch
