#include "crowdmatch/json_io.hpp"

namespace crowdmatch {

using nlohmann::json;

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

std::string_view to_string(LinkOrigin o) noexcept {
  return o == LinkOrigin::Imported ? "imported" : "triage";
}

}  // namespace

void to_json(json& j, const Issue& issue) {
  j = json{{"iid", issue.iid}, {"title", issue.title}};
  put_optional(j, "title_translated", issue.title_translated);
  put_optional(j, "description", issue.description);
  j["labels"] = issue.labels;
  j["state"] = to_string(issue.state);
  put_optional(j, "url", issue.url);
  j["created_at"] = issue.created_at;
}

void from_json(const json& j, Issue& issue) {
  issue.iid = j.at("iid").get<std::int64_t>();
  issue.title = j.at("title").get<std::string>();
  issue.title_translated = optional_field<std::string>(j, "title_translated");
  issue.description = optional_field<std::string>(j, "description");
  issue.labels = j.value("labels", std::vector<std::string>{});
  const auto state = parse_issue_state(j.value("state", std::string("open")));
  if (!state) throw Error(ErrorCode::InvalidArgument, "unknown issue state");
  issue.state = *state;
  issue.url = optional_field<std::string>(j, "url");
  issue.created_at = j.value("created_at", std::string{});
}

void to_json(json& j, const Review& review) {
  j = json{{"id", review.id},
           {"original_text", review.original_text},
           {"original_lang", review.original_lang}};
  put_optional(j, "translated_text", review.translated_text);
  if (review.label) j["label"] = to_string(*review.label);
  j["source"] = review.source;
  j["created_at"] = review.created_at;
}

void from_json(const json& j, Review& review) {
  review.id = j.at("id").get<std::string>();
  review.original_text = j.at("original_text").get<std::string>();
  review.original_lang = j.value("original_lang", std::string("en"));
  review.translated_text = optional_field<std::string>(j, "translated_text");
  review.label.reset();
  if (auto label = optional_field<std::string>(j, "label")) {
    review.label = parse_review_class(*label);
    if (!review.label) throw Error(ErrorCode::InvalidArgument, "unknown review label " + *label);
  }
  review.source = j.value("source", std::string{});
  review.created_at = j.value("created_at", std::string{});
}

void to_json(json& j, const GoldLink& link) {
  j = json{{"type", "gold"},
           {"review_id", link.review_id},
           {"issue_iid", link.issue_iid},
           {"origin", to_string(link.origin)},
           {"decided_at", link.decided_at}};
}

void from_json(const json& j, GoldLink& link) {
  link.review_id = j.at("review_id").get<std::string>();
  link.issue_iid = j.at("issue_iid").get<std::int64_t>();
  const std::string origin = j.value("origin", std::string("imported"));
  if (origin != "imported" && origin != "triage") {
    throw Error(ErrorCode::InvalidArgument, "unknown link origin " + origin);
  }
  link.origin = origin == "imported" ? LinkOrigin::Imported : LinkOrigin::Triage;
  link.decided_at = j.value("decided_at", std::string{});
}

void to_json(json& j, const TriageDecision& d) {
  j = json{{"type", "triage"}, {"review_id", d.review_id}, {"decision", to_string(d.kind)}};
  put_optional(j, "issue_iid", d.issue_iid);
  j["decided_by"] = d.decided_by;
  j["decided_at"] = d.decided_at;
}

void from_json(const json& j, TriageDecision& d) {
  d.review_id = j.at("review_id").get<std::string>();
  const auto kind = parse_triage_kind(j.at("decision").get<std::string>());
  if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown triage decision");
  d.kind = *kind;
  d.issue_iid = optional_field<std::int64_t>(j, "issue_iid");
  d.decided_by = j.value("decided_by", std::string{});
  d.decided_at = j.value("decided_at", std::string{});
}

void to_json(json& j, const StoredEmbedding& e) {
  j = json{{"kind", to_string(e.kind)},
           {"id", e.record_id},
           {"text_hash", e.text_hash},
           {"dim", e.vector.dim()}};
  j["values"] = std::vector<double>(e.vector.values().begin(), e.vector.values().end());
}

StoredEmbedding stored_embedding_from_json(const json& j, const std::string& provider_id) {
  StoredEmbedding e;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "issue" && kind != "review") {
    throw Error(ErrorCode::InvalidArgument, "unknown embedding kind " + kind);
  }
  e.kind = kind == "issue" ? EmbeddingKind::Issue : EmbeddingKind::Review;
  e.record_id = j.at("id").get<std::string>();
  e.text_hash = j.value("text_hash", std::string{});
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != j.at("dim").get<std::size_t>()) {
    throw Error(ErrorCode::DimensionMismatch, "stored vector length differs from its dim");
  }
  e.vector = EmbeddingVector(provider_id, std::move(values));
  return e;
}

}  // namespace crowdmatch
