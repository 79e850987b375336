#include "crowdmatch/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

namespace crowdmatch {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  });
  return out;
}

}  // namespace

std::string_view to_string(ReviewClass c) noexcept {
  switch (c) {
    case ReviewClass::Irrelevant: return "irrelevant";
    case ReviewClass::FeatureRequest: return "feature";
    case ReviewClass::BugReport: return "bug";
  }
  return "irrelevant";
}

std::optional<ReviewClass> parse_review_class(std::string_view s) noexcept {
  const std::string l = lower_ascii(s);
  if (l == "irrelevant") return ReviewClass::Irrelevant;
  if (l == "feature" || l == "feature_request" || l == "featurerequest") {
    return ReviewClass::FeatureRequest;
  }
  if (l == "bug" || l == "bug_report" || l == "bugreport") return ReviewClass::BugReport;
  return std::nullopt;
}

std::string_view to_string(IssueState s) noexcept {
  return s == IssueState::Open ? "open" : "closed";
}

std::optional<IssueState> parse_issue_state(std::string_view s) noexcept {
  const std::string l = lower_ascii(s);
  if (l == "open" || l == "opened") return IssueState::Open;
  if (l == "closed") return IssueState::Closed;
  return std::nullopt;
}

void validate(const Review& review) {
  if (review.id.empty()) throw Error(ErrorCode::InvalidArgument, "review id is empty");
  if (trim(review.original_text).empty()) {
    throw Error(ErrorCode::InvalidArgument, "review " + review.id + " has empty text");
  }
  if (review.translated_text && review.translated_text->empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "review " + review.id + " has an empty translation");
  }
}

void validate(const Issue& issue) {
  if (issue.iid <= 0) {
    throw Error(ErrorCode::InvalidArgument, "issue iid must be positive");
  }
  if (trim(issue.title).empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "issue " + std::to_string(issue.iid) + " has an empty title");
  }
}

EmbeddingVector::EmbeddingVector(std::string provider_id, std::vector<double> values)
    : provider_id_(std::move(provider_id)), values_(std::move(values)) {
  if (values_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "embedding must have positive dimension");
  }
  for (double x : values_) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::InvalidArgument, "embedding contains a non-finite value");
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double sum = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> v) noexcept {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

namespace {

void require_compatible(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "vector dimensions differ: " +
                                                  std::to_string(a.dim()) + " vs " +
                                                  std::to_string(b.dim()));
  }
  if (a.provider_id() != b.provider_id()) {
    throw Error(ErrorCode::DimensionMismatch, "vectors come from different providers: '" +
                                                  a.provider_id() + "' vs '" +
                                                  b.provider_id() + "'");
  }
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  require_compatible(a, b);
  const double na = l2_norm(a.values());
  const double nb = l2_norm(b.values());
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return std::clamp(dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
  const double n = l2_norm(v.values());
  if (n == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(v.values().begin(), v.values().end());
  for (double& x : out) x /= n;
  return {v.provider_id(), std::move(out)};
}

EmbeddingVector mean_pool(std::span<const EmbeddingVector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "mean_pool of no vectors");
  const auto& first = vectors.front();
  std::vector<double> sum(first.dim(), 0.0);
  for (const auto& v : vectors) {
    require_compatible(first, v);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double& x : sum) x /= n;
  return {first.provider_id(), std::move(sum)};
}

double similarity_percent(double cosine) noexcept {
  return std::floor(cosine * 1000.0 + 0.5) / 10.0;
}

std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", similarity_percent(ratio));
  return buf;
}

std::string content_hash(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string now_utc_iso() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string_view trim(std::string_view s) noexcept {
  auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  // U+00A0 NO-BREAK SPACE and U+3000 IDEOGRAPHIC SPACE in UTF-8.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::string_view ws : {std::string_view("\xC2\xA0"), std::string_view("\xE3\x80\x80")}) {
      if (s.starts_with(ws)) { s.remove_prefix(ws.size()); changed = true; }
      if (s.ends_with(ws)) { s.remove_suffix(ws.size()); changed = true; }
    }
    while (!s.empty() && is_space(s.front())) { s.remove_prefix(1); changed = true; }
    while (!s.empty() && is_space(s.back())) { s.remove_suffix(1); changed = true; }
  }
  return s;
}

}  // namespace crowdmatch
