#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crowdmatch/corpus.hpp"
#include "crowdmatch/embedding.hpp"
#include "crowdmatch/enrichment.hpp"
#include "crowdmatch/model.hpp"

namespace crowdmatch {

inline constexpr std::size_t kDefaultTopK = 5;

/// Unit-normalized issue vectors for one provider, sorted by iid.
/// Immutable once built.
struct MatchIndex {
  struct Entry {
    std::int64_t iid = 0;
    std::vector<double> unit;
  };

  std::string provider_id;
  std::size_t dim = 0;
  std::vector<Entry> entries;
  std::string built_at;
  std::string source_digest;  // over (iid, text hash) of the source records
};

struct MatchResult {
  std::optional<std::string> review_id;
  std::string query_text;
  std::string provider_id;
  std::vector<MatchCandidate> candidates;  // similarity desc, then iid asc
  std::optional<double> threshold_applied;
  std::size_t k_requested = kDefaultTopK;
  bool filtered_out = false;
  std::optional<std::string> translated_text;
  std::optional<ReviewClass> label;
};

/// Throws DimensionMismatch (mixed dims or providers, duplicate iids as
/// InvalidArgument), NoEmbeddings when `vectors` is empty, ZeroVector.
MatchIndex build_index(const std::string& provider_id,
                       std::vector<std::pair<std::int64_t, EmbeddingVector>> vectors,
                       std::string source_digest = {});

/// Builds from the workspace's stored issue vectors for the provider.
MatchIndex build_index(const Workspace& ws, const std::string& provider_id);

/// Digest of the issue records currently stored for a provider.
std::string issue_embeddings_digest(const Workspace& ws, const std::string& provider_id);

/// Exact scan: similarity = dot(unit(query), entry). Keeps entries at or
/// above `threshold`, returns the best `k` ranked 1..n.
MatchResult query_top_k(const MatchIndex& index, const EmbeddingVector& query, std::size_t k,
                        std::optional<double> threshold = std::nullopt);

struct MatchOptions {
  std::string provider = "ref-384";
  std::size_t k = kDefaultTopK;
  std::optional<double> threshold;
  std::optional<std::string> translate_to;
  std::string source_lang = "auto";
  bool classify = false;
  std::optional<std::set<ReviewClass>> classify_filter;  // implies classify
  std::optional<std::string> review_id;
};

/// Throws InvalidArgument unless k >= 1 and threshold lies in [-1, 1].
void validate(const MatchOptions& opts);

/// The end-to-end match pipeline over one workspace. Indexes are built on
/// first use per provider (exactly once, even under concurrent first calls)
/// and swapped atomically on invalidate().
class Matcher {
 public:
  Matcher(Workspace ws, std::shared_ptr<const ProviderRegistry> registry,
          std::shared_ptr<const Enricher> enricher);

  /// Ad-hoc text; opts.source_lang gives its language ("auto" if unknown).
  MatchResult match_review(std::string_view text, const MatchOptions& opts) const;
  /// Stored review; an existing translation or label is reused.
  MatchResult match(Review review, const MatchOptions& opts) const;

  /// Throws UnknownProvider, NoEmbeddings.
  std::shared_ptr<const MatchIndex> index(const std::string& provider_id) const;
  void invalidate(const std::string& provider_id) const;
  std::size_t index_builds() const noexcept { return builds_.load(); }

  const Workspace& workspace() const noexcept { return ws_; }
  const ProviderRegistry& registry() const noexcept { return *registry_; }
  const Enricher& enricher() const noexcept { return *enricher_; }

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const MatchIndex> index;
  };

  Workspace ws_;
  std::shared_ptr<const ProviderRegistry> registry_;
  std::shared_ptr<const Enricher> enricher_;
  mutable std::mutex slots_mutex_;
  mutable std::map<std::string, std::shared_ptr<Slot>> slots_;
  mutable std::atomic<std::size_t> builds_{0};
};

}  // namespace crowdmatch
