#pragma once

#include <json.hpp>

#include "crowdmatch/corpus.hpp"
#include "crowdmatch/model.hpp"

// nlohmann/json bindings for the persisted record types. Optional fields are
// omitted when absent and accepted as missing or null when read.
namespace crowdmatch {

void to_json(nlohmann::json& j, const Issue& issue);
void from_json(const nlohmann::json& j, Issue& issue);

void to_json(nlohmann::json& j, const Review& review);
void from_json(const nlohmann::json& j, Review& review);

void to_json(nlohmann::json& j, const GoldLink& link);
void from_json(const nlohmann::json& j, GoldLink& link);

void to_json(nlohmann::json& j, const TriageDecision& d);
void from_json(const nlohmann::json& j, TriageDecision& d);

void to_json(nlohmann::json& j, const StoredEmbedding& e);
/// Needs the provider id, which lives in the file name rather than the record.
StoredEmbedding stored_embedding_from_json(const nlohmann::json& j, const std::string& provider_id);

}  // namespace crowdmatch
