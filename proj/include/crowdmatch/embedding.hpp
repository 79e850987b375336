#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "crowdmatch/model.hpp"
#include "crowdmatch/text.hpp"

namespace crowdmatch {

inline constexpr std::size_t kDefaultDim = 384;

/// Anything that turns text into a fixed-dimension vector.
/// Same provider_id and same text must always give the same vector.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string provider_id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

// ---------------------------------------------------------------------------
// Reference hashing embedder

/// Signed feature hashing over content tokens (FNV-1a 64, bucket = h mod dim,
/// sign from the top bit), L2-normalized. When the content filter removes
/// every token, all tokens are hashed instead.
/// Throws EmptyText when the text has no tokens at all.
EmbeddingVector reference_hash_embed(std::string_view text, std::size_t dim,
                                     const StopwordList& stopwords = StopwordList::builtin());

class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dim = kDefaultDim,
                        std::shared_ptr<const StopwordList> stopwords = nullptr);

  std::string provider_id() const override { return "ref-" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::shared_ptr<const StopwordList> stopwords_;
};

// ---------------------------------------------------------------------------
// Pooled contextual token embeddings

struct TokenEmbeddings {
  std::vector<TokenSpan> tokens;
  std::vector<EmbeddingVector> vectors;  // parallel to tokens
};

/// A model producing one contextual vector per token.
class TokenEmbeddingBackend {
 public:
  virtual ~TokenEmbeddingBackend() = default;
  virtual std::string backend_id() const = 0;
  virtual std::size_t dim() const = 0;
  /// `normalized` is the output of normalize_text; spans index into it.
  virtual TokenEmbeddings contextual_token_embeddings(std::string_view normalized) const = 0;
};

/// Deterministic stand-in for a contextual encoder: each token gets a dense
/// pseudo-random vector seeded by its hash, mixed with half of each
/// neighbour's vector.
class HashContextBackend final : public TokenEmbeddingBackend {
 public:
  explicit HashContextBackend(std::size_t dim = kDefaultDim);

  std::string backend_id() const override { return "hashctx-" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }
  TokenEmbeddings contextual_token_embeddings(std::string_view normalized) const override;

 private:
  std::size_t dim_;
};

/// Mean of the backend vectors whose tokens overlap a token kept by
/// `filter`; mean of all backend vectors when nothing is kept.
EmbeddingVector pooled_contextual_embed(const TokenEmbeddingBackend& backend,
                                        const TokenFilter& filter, std::string_view text);

class PooledContextualEmbedder final : public EmbeddingProvider {
 public:
  PooledContextualEmbedder(std::shared_ptr<const TokenEmbeddingBackend> backend,
                           std::shared_ptr<const TokenFilter> filter);

  std::string provider_id() const override;
  std::size_t dim() const override { return backend_->dim(); }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::shared_ptr<const TokenEmbeddingBackend> backend_;
  std::shared_ptr<const TokenFilter> filter_;
};

// ---------------------------------------------------------------------------
// Sentence-level models

/// A model that maps a whole text to one vector, hosted elsewhere.
class SentenceModelAdapter {
 public:
  virtual ~SentenceModelAdapter() = default;
  virtual std::string provider_id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Throws BackendUnavailable when the model cannot be reached.
  virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const = 0;
};

/// Returns the adapter's vector for `text` verbatim, after checking its
/// length against the declared dim (DimensionMismatch) and its values.
EmbeddingVector sentence_embed(const SentenceModelAdapter& adapter, std::string_view text);

class SentenceEmbedder final : public EmbeddingProvider {
 public:
  explicit SentenceEmbedder(std::shared_ptr<const SentenceModelAdapter> adapter);

  std::string provider_id() const override { return adapter_->provider_id(); }
  std::size_t dim() const override { return adapter_->dim(); }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::shared_ptr<const SentenceModelAdapter> adapter_;
};

/// Remote endpoint: POST {url}/embed {"texts": [...], "model": m}
/// -> {"dim": d, "vectors": [[...]]}. Requests are serialized.
class HttpSentenceAdapter final : public SentenceModelAdapter {
 public:
  HttpSentenceAdapter(std::string provider_id, std::string base_url, std::string model,
                      std::size_t dim = kDefaultDim);

  std::string provider_id() const override { return provider_id_; }
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  std::string provider_id_;
  std::string base_url_;
  std::string model_;
  std::size_t dim_;
  mutable std::mutex mutex_;
};

/// Replays recorded /embed exchanges. Fixture file layout:
/// {"provider_id": s, "model": s, "dim": n,
///  "recordings": [{"request": {"texts": [...], "model": s},
///                  "response": {"dim": n, "vectors": [[...]]}}]}
/// Texts absent from the recordings raise BackendUnavailable.
class RecordedSentenceAdapter final : public SentenceModelAdapter {
 public:
  RecordedSentenceAdapter(std::string provider_id, std::string model, std::size_t dim);
  static RecordedSentenceAdapter load(const std::filesystem::path& fixture);

  void record(const std::string& text, std::vector<double> vector);
  void save(const std::filesystem::path& fixture) const;

  std::string provider_id() const override { return provider_id_; }
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  std::string provider_id_;
  std::string model_;
  std::size_t dim_;
  std::map<std::string, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------

/// Thread-safe directory of providers keyed by provider_id.
class ProviderRegistry {
 public:
  /// Throws DuplicateProvider.
  void register_provider(std::shared_ptr<const EmbeddingProvider> provider);
  /// Throws UnknownProvider.
  std::shared_ptr<const EmbeddingProvider> get_provider(std::string_view id) const;
  bool contains(std::string_view id) const;
  /// Sorted ascending.
  std::vector<std::string> list_providers() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const EmbeddingProvider>, std::less<>> providers_;
};

/// Registers the built-in providers: "ref-384" and the pooled
/// hash-context provider over the stopword filter.
void register_builtin_providers(ProviderRegistry& registry);

}  // namespace crowdmatch
