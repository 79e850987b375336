#include "crowdmatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crowdmatch {

namespace {

bool ranks_before(const MatchCandidate& a, const MatchCandidate& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.issue_iid < b.issue_iid;
}

}  // namespace

MatchIndex build_index(const std::string& provider_id,
                       std::vector<std::pair<std::int64_t, EmbeddingVector>> vectors,
                       std::string source_digest) {
  if (vectors.empty()) {
    throw Error(ErrorCode::NoEmbeddings, "no issue embeddings for provider " + provider_id);
  }
  std::sort(vectors.begin(), vectors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  MatchIndex index;
  index.provider_id = provider_id;
  index.dim = vectors.front().second.dim();
  index.built_at = now_utc_iso();
  index.source_digest = std::move(source_digest);
  index.entries.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& [iid, vec] = vectors[i];
    if (i > 0 && vectors[i - 1].first == iid) {
      throw Error(ErrorCode::InvalidArgument, "duplicate issue iid " + std::to_string(iid));
    }
    if (vec.dim() != index.dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "issue " + std::to_string(iid) + " has dim " + std::to_string(vec.dim()) +
                      ", expected " + std::to_string(index.dim));
    }
    const EmbeddingVector unit = l2_normalize(vec);
    index.entries.push_back({iid, {unit.values().begin(), unit.values().end()}});
  }
  return index;
}

std::string issue_embeddings_digest(const Workspace& ws, const std::string& provider_id) {
  std::string material;
  for (const auto& e : ws.load_embeddings(provider_id)) {
    if (e.kind != EmbeddingKind::Issue) continue;
    material += e.record_id + ':' + e.text_hash + ';';
  }
  return content_hash(material);
}

MatchIndex build_index(const Workspace& ws, const std::string& provider_id) {
  std::vector<std::pair<std::int64_t, EmbeddingVector>> vectors;
  std::string material;
  for (auto& e : ws.load_embeddings(provider_id)) {
    if (e.kind != EmbeddingKind::Issue) continue;
    material += e.record_id + ':' + e.text_hash + ';';
    vectors.emplace_back(std::stoll(e.record_id), std::move(e.vector));
  }
  return build_index(provider_id, std::move(vectors), content_hash(material));
}

MatchResult query_top_k(const MatchIndex& index, const EmbeddingVector& query, std::size_t k,
                        std::optional<double> threshold) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (query.dim() != index.dim) {
    throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                  " does not match index dim " +
                                                  std::to_string(index.dim));
  }
  if (query.provider_id() != index.provider_id) {
    throw Error(ErrorCode::DimensionMismatch, "query from provider '" + query.provider_id() +
                                                  "' against index of '" + index.provider_id + "'");
  }
  const EmbeddingVector unit = l2_normalize(query);

  std::vector<MatchCandidate> scored;
  scored.reserve(index.entries.size());
  for (const auto& entry : index.entries) {
    const double sim = std::clamp(dot(unit.values(), entry.unit), -1.0, 1.0);
    if (threshold && sim < *threshold) continue;
    scored.push_back({entry.iid, sim, 0});
  }
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    ranks_before);
  scored.resize(n);
  for (std::size_t i = 0; i < n; ++i) scored[i].rank = static_cast<int>(i + 1);

  MatchResult result;
  result.provider_id = index.provider_id;
  result.candidates = std::move(scored);
  result.threshold_applied = threshold;
  result.k_requested = k;
  return result;
}

void validate(const MatchOptions& opts) {
  if (opts.k < 1) throw Error(ErrorCode::InvalidArgument, "top-k must be at least 1");
  if (opts.threshold && !(*opts.threshold >= -1.0 && *opts.threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in [-1, 1]");
  }
}

Matcher::Matcher(Workspace ws, std::shared_ptr<const ProviderRegistry> registry,
                 std::shared_ptr<const Enricher> enricher)
    : ws_(std::move(ws)), registry_(std::move(registry)), enricher_(std::move(enricher)) {
  if (!registry_) throw Error(ErrorCode::InvalidArgument, "matcher needs a provider registry");
  if (!enricher_) enricher_ = std::make_shared<Enricher>(nullptr, nullptr);
}

std::shared_ptr<const MatchIndex> Matcher::index(const std::string& provider_id) const {
  if (!registry_->contains(provider_id)) {
    throw Error(ErrorCode::UnknownProvider, "unknown provider: " + provider_id);
  }
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(slots_mutex_);
    auto& s = slots_[provider_id];
    if (!s) s = std::make_shared<Slot>();
    slot = s;
  }
  // A throwing build leaves the flag unset, so the next caller retries.
  std::call_once(slot->once, [&] {
    slot->index = std::make_shared<const MatchIndex>(build_index(ws_, provider_id));
    ++builds_;
  });
  return slot->index;
}

void Matcher::invalidate(const std::string& provider_id) const {
  std::lock_guard lock(slots_mutex_);
  slots_.erase(provider_id);
}

MatchResult Matcher::match_review(std::string_view text, const MatchOptions& opts) const {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "review text is empty");
  Review review;
  review.id = opts.review_id.value_or(content_hash(text));
  review.original_text = std::string(text);
  review.original_lang = opts.source_lang;
  return match(std::move(review), opts);
}

MatchResult Matcher::match(Review review, const MatchOptions& opts) const {
  validate(opts);
  const auto provider = registry_->get_provider(opts.provider);
  const auto idx = index(opts.provider);

  // Stored translations and labels are reused; only missing parts run.
  const bool want_label = opts.classify || opts.classify_filter.has_value();
  if (opts.translate_to && !review.translated_text) {
    if (review.original_lang == *opts.translate_to) {
      review.translated_text = review.original_text;
    } else {
      if (!enricher_->translator()) {
        throw Error(ErrorCode::ProviderUnavailable, "no translation provider configured");
      }
      review.translated_text = enricher_->translator()->translate(
          review.original_text, review.original_lang, *opts.translate_to);
    }
  }
  if (want_label && !review.label) review.label = enricher_->classifier().classify(review.embed_text());

  MatchResult result;
  if (opts.classify_filter && !opts.classify_filter->contains(*review.label)) {
    result.provider_id = opts.provider;
    result.threshold_applied = opts.threshold;
    result.k_requested = opts.k;
    result.filtered_out = true;
  } else {
    result = query_top_k(*idx, provider->embed(review.embed_text()), opts.k, opts.threshold);
  }
  result.review_id = opts.review_id;
  result.query_text = review.original_text;
  result.translated_text = review.translated_text;
  result.label = review.label;
  return result;
}

}  // namespace crowdmatch
