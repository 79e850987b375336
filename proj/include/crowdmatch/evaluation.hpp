#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdmatch/corpus.hpp"
#include "crowdmatch/matcher.hpp"

namespace crowdmatch {

struct ReviewOutcome {
  std::string review_id;
  std::int64_t gold_iid = 0;
  std::optional<int> rank_found;
  std::optional<double> similarity;
  bool filtered_out = false;

  friend bool operator==(const ReviewOutcome&, const ReviewOutcome&) = default;
};

struct EvalFailure {
  std::string review_id;
  std::string error;  // error_code_name
  std::string message;
  bool excluded = false;  // embedding failed: left out of every rate

  friend bool operator==(const EvalFailure&, const EvalFailure&) = default;
};

struct EvalReport {
  std::string provider_id;
  std::size_t k = kDefaultTopK;
  std::optional<double> threshold;
  std::size_t n_gold = 0;
  std::size_t n_hits = 0;
  double hit_rate = 0;
  double mrr = 0;
  std::map<int, std::size_t> correct_rank_histogram;
  std::optional<double> mean_similarity_of_correct;
  std::size_t n_filtered_out = 0;
  std::vector<ReviewOutcome> per_review;  // review-id order
  std::vector<EvalFailure> failures;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct HitStats {
  std::size_t n_hits = 0;
  double hit_rate = 0;
};

struct RankStats {
  std::map<int, std::size_t> histogram;
  std::optional<double> mean_similarity_of_correct;
  double mrr = 0;
};

using ResultMap = std::map<std::string, MatchResult, std::less<>>;

/// A hit when the gold issue is among the first min(k, |candidates|).
/// Throws EmptyGoldSet, MissingResult.
HitStats hit_at_k(const std::vector<GoldLink>& gold, const ResultMap& results, std::size_t k);
RankStats rank_stats(const std::vector<GoldLink>& gold, const ResultMap& results, std::size_t k);

struct EvalOptions {
  std::size_t k = kDefaultTopK;
  std::optional<double> threshold;
  std::optional<std::string> translate_to;
  std::optional<std::set<ReviewClass>> classify_filter;
  std::size_t workers = 4;
};

/// Matches every gold-linked review and aggregates. Throws UnknownProvider,
/// NoEmbeddings, EmptyGoldSet, UnknownReview.
EvalReport run_experiment(const Matcher& matcher, const std::string& provider_id,
                          const EvalOptions& opts);

/// Recounts hits, rate and histogram from per_review; throws on disagreement.
void check_consistency(const EvalReport& report);

struct ProviderDelta {
  std::string provider_id;
  double hit_rate_delta = 0;  // against the first provider
  double mrr_delta = 0;

  friend bool operator==(const ProviderDelta&, const ProviderDelta&) = default;
};

struct ComparisonReport {
  std::vector<EvalReport> reports;
  std::vector<ProviderDelta> deltas;

  friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

/// Needs at least two provider ids (repeats allowed).
ComparisonReport compare_providers(const Matcher& matcher,
                                   const std::vector<std::string>& provider_ids,
                                   const EvalOptions& opts);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
void to_json(nlohmann::json& j, const ComparisonReport& r);
void from_json(const nlohmann::json& j, ComparisonReport& r);

std::string format_table(const EvalReport& r);
std::string format_table(const ComparisonReport& r);

}  // namespace crowdmatch
