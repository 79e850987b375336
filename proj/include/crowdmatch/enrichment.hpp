#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "crowdmatch/model.hpp"

namespace crowdmatch {

// ---------------------------------------------------------------------------
// Classification

struct ClassifierRule {
  ReviewClass cls;
  std::vector<std::string> keywords;  // lowercase; may contain spaces
};

/// Shipped keyword table: bug rules first, then feature rules.
const std::vector<ClassifierRule>& builtin_classifier_rules();

/// Keyword baseline. A keyword matches when it starts at a word boundary
/// ("crash" matches "crashes"). Bug keywords win over feature keywords.
/// Throws EmptyText.
ReviewClass classify_review(std::string_view text);

class ReviewClassifier {
 public:
  virtual ~ReviewClassifier() = default;
  virtual std::string classifier_id() const = 0;
  virtual ReviewClass classify(std::string_view text) const = 0;
};

class RuleClassifier final : public ReviewClassifier {
 public:
  std::string classifier_id() const override { return "rules-v1"; }
  ReviewClass classify(std::string_view text) const override { return classify_review(text); }
};

/// POST {url}/classify {"text": t} -> {"label": "bug"|"feature"|"irrelevant"}.
class HttpClassifier final : public ReviewClassifier {
 public:
  explicit HttpClassifier(std::string base_url);
  std::string classifier_id() const override { return "http:" + base_url_; }
  ReviewClass classify(std::string_view text) const override;

 private:
  std::string base_url_;
};

// ---------------------------------------------------------------------------
// Translation

/// "en", "pt-BR", "zh-Hant-TW", ...: a 2-3 letter primary subtag followed
/// by alphanumeric subtags of 1-8 characters.
bool is_valid_language_tag(std::string_view tag) noexcept;

struct TranslationRecord {
  std::string source_lang;
  std::string target_lang;
  std::uint64_t input_hash = 0;
  std::string output_text;
  std::string provider;

  friend bool operator==(const TranslationRecord&, const TranslationRecord&) = default;
};

/// Persistent translation cache; one JSON record per line. Concurrent
/// readers, serialized writers. A default-constructed cache lives in memory.
class TranslationCache {
 public:
  TranslationCache() = default;
  /// Loads existing records from `file` (if present) and appends new ones to it.
  explicit TranslationCache(std::filesystem::path file);

  std::optional<std::string> lookup(std::string_view provider, std::string_view source,
                                    std::string_view target, std::uint64_t input_hash) const;
  void store(const TranslationRecord& record);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string, std::uint64_t>;
  std::optional<std::filesystem::path> file_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::string> entries_;
};

class TranslationAdapter {
 public:
  virtual ~TranslationAdapter() = default;
  virtual std::string provider_id() const = 0;
  /// Throws ProviderUnavailable or UnsupportedLanguage.
  virtual std::string translate(std::string_view text, std::string_view source,
                                std::string_view target) const = 0;
};

/// POST {url}/translate {"q", "source", "target"} -> {"translatedText"}.
class HttpTranslator final : public TranslationAdapter {
 public:
  explicit HttpTranslator(std::string base_url, std::string provider_id = "http-translate");
  std::string provider_id() const override { return provider_id_; }
  std::string translate(std::string_view text, std::string_view source,
                        std::string_view target) const override;

 private:
  std::string base_url_;
  std::string provider_id_;
};

/// Replays a fixture: JSON lines {"q", "source", "target", "translatedText"}.
/// Unrecorded inputs raise ProviderUnavailable.
class RecordedTranslator final : public TranslationAdapter {
 public:
  explicit RecordedTranslator(std::string provider_id = "recorded");
  static RecordedTranslator load(const std::filesystem::path& fixture,
                                 std::string provider_id = "recorded");

  void record(std::string q, std::string source, std::string target, std::string output);
  std::string provider_id() const override { return provider_id_; }
  std::string translate(std::string_view text, std::string_view source,
                        std::string_view target) const override;

 private:
  std::string provider_id_;
  std::map<std::tuple<std::string, std::string, std::string>, std::string> table_;
};

/// Cache-fronted translation with a bounded number of in-flight adapter calls.
class Translator {
 public:
  /// `adapter` may be null (offline: only cache hits succeed). `provider`
  /// names the cache partition; defaults to the adapter's id.
  Translator(std::shared_ptr<const TranslationAdapter> adapter,
             std::shared_ptr<TranslationCache> cache, std::size_t max_in_flight = 4,
             std::optional<std::string> provider = std::nullopt);

  /// Identity when source == target; otherwise cache, then adapter.
  std::string translate(std::string_view text, std::string_view source, std::string_view target);

  const std::string& provider() const noexcept { return provider_; }
  std::size_t adapter_calls() const noexcept { return adapter_calls_; }

 private:
  std::shared_ptr<const TranslationAdapter> adapter_;
  std::shared_ptr<TranslationCache> cache_;
  std::string provider_;
  std::counting_semaphore<64> in_flight_;
  std::size_t adapter_calls_ = 0;
  std::mutex stats_mutex_;
};

// ---------------------------------------------------------------------------

struct EnrichOptions {
  std::optional<std::string> target;  // translate when set
  bool classify = true;
};

/// Translate-then-classify. The translation is always recomputed from the
/// original text, so enriching twice gives the same review.
class Enricher {
 public:
  Enricher(std::shared_ptr<Translator> translator,
           std::shared_ptr<const ReviewClassifier> classifier);

  Review enrich(Review review, const EnrichOptions& opts) const;

  Translator* translator() const noexcept { return translator_.get(); }
  const ReviewClassifier& classifier() const noexcept { return *classifier_; }

 private:
  std::shared_ptr<Translator> translator_;
  std::shared_ptr<const ReviewClassifier> classifier_;
};

inline Review pipeline_enrich(Review review, const EnrichOptions& opts, const Enricher& enricher) {
  return enricher.enrich(std::move(review), opts);
}

}  // namespace crowdmatch
