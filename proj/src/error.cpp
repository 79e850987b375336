#include "crowdmatch/error.hpp"

namespace crowdmatch {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::ZeroVector: return "zero_vector";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::EmptyText: return "empty_text";
    case ErrorCode::BackendUnavailable: return "backend_unavailable";
    case ErrorCode::DuplicateProvider: return "duplicate_provider";
    case ErrorCode::UnknownProvider: return "unknown_provider";
    case ErrorCode::ProviderUnavailable: return "provider_unavailable";
    case ErrorCode::UnsupportedLanguage: return "unsupported_language";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::UnknownReview: return "unknown_review";
    case ErrorCode::UnknownIssue: return "unknown_issue";
    case ErrorCode::AuthFailure: return "auth_failure";
    case ErrorCode::NetworkFailure: return "network_failure";
    case ErrorCode::RateLimited: return "rate_limited";
    case ErrorCode::NoEmbeddings: return "no_embeddings";
    case ErrorCode::MissingResult: return "missing_result";
    case ErrorCode::EmptyGoldSet: return "empty_gold_set";
    case ErrorCode::SchemaMismatch: return "schema_mismatch";
    case ErrorCode::WorkspaceLocked: return "workspace_locked";
    case ErrorCode::Storage: return "storage_error";
  }
  return "unknown";
}

}  // namespace crowdmatch
