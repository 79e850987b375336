#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdmatch/error.hpp"

namespace crowdmatch {

enum class ReviewClass { Irrelevant, FeatureRequest, BugReport };

std::string_view to_string(ReviewClass c) noexcept;
/// Accepts "irrelevant", "feature"/"feature_request"/"featurerequest",
/// "bug"/"bug_report"/"bugreport" (case-insensitive).
std::optional<ReviewClass> parse_review_class(std::string_view s) noexcept;

enum class IssueState { Open, Closed };

std::string_view to_string(IssueState s) noexcept;
/// Accepts "open", "opened", "closed".
std::optional<IssueState> parse_issue_state(std::string_view s) noexcept;

struct Review {
  std::string id;
  std::string original_text;
  std::string original_lang = "en";
  std::optional<std::string> translated_text;
  std::optional<ReviewClass> label;
  std::string source;
  std::string created_at;  // ISO-8601 UTC

  /// Text that gets embedded: the translation when present.
  const std::string& embed_text() const noexcept {
    return translated_text ? *translated_text : original_text;
  }

  friend bool operator==(const Review&, const Review&) = default;
};

struct Issue {
  std::int64_t iid = 0;
  std::string title;
  std::optional<std::string> title_translated;
  std::optional<std::string> description;
  std::vector<std::string> labels;
  IssueState state = IssueState::Open;
  std::optional<std::string> url;
  std::string created_at;  // ISO-8601 UTC

  /// Only the title is ever embedded.
  const std::string& embed_text() const noexcept {
    return title_translated ? *title_translated : title;
  }

  friend bool operator==(const Issue&, const Issue&) = default;
};

/// Throws InvalidArgument when a record breaks its invariants.
void validate(const Review& review);
void validate(const Issue& issue);

/// Fixed-dimension real vector tagged with the provider that produced it.
/// Values are held and processed in 64-bit floating point.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws InvalidArgument on empty or non-finite values.
  EmbeddingVector(std::string provider_id, std::vector<double> values);

  const std::string& provider_id() const noexcept { return provider_id_; }
  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const& noexcept { return values_; }
  std::span<const double> values() const&& = delete;  // would dangle
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  EmbeddingVector with_provider(std::string provider_id) const {
    EmbeddingVector v = *this;
    v.provider_id_ = std::move(provider_id);
    return v;
  }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::string provider_id_;
  std::vector<double> values_;
};

struct MatchCandidate {
  std::int64_t issue_iid = 0;
  double similarity = 0.0;
  int rank = 0;

  friend bool operator==(const MatchCandidate&, const MatchCandidate&) = default;
};

// Vector math. All sums run in index order so results are bit-stable.

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double l2_norm(std::span<const double> v) noexcept;

/// dot(a,b) / (|a|*|b|), clamped to [-1, 1]. Symmetric bit-for-bit.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
EmbeddingVector l2_normalize(const EmbeddingVector& v);
EmbeddingVector mean_pool(std::span<const EmbeddingVector> vectors);

/// Display rule for similarities: cosine * 100, rounded half-up to 0.1.
double similarity_percent(double cosine) noexcept;
/// Same rule for any ratio in [0,1]; formatted "56.5%".
std::string format_percent(double ratio);

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// 16 lowercase hex digits of fnv1a64(text).
std::string content_hash(std::string_view text);

/// Current time as "YYYY-MM-DDTHH:MM:SSZ".
std::string now_utc_iso();

/// Trims ASCII and common Unicode whitespace from both ends.
std::string_view trim(std::string_view s) noexcept;

}  // namespace crowdmatch
