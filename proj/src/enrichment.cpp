#include "crowdmatch/enrichment.hpp"

#include <httplib.h>

#include <fstream>
#include <json.hpp>
#include <regex>

#include "crowdmatch/text.hpp"
#include "http_util.hpp"

namespace crowdmatch {

using nlohmann::json;

namespace {

bool ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::string classification_form(std::string_view text) {
  std::string s = normalize_text(text);
  // Typographic apostrophe U+2019 -> '
  for (std::size_t pos; (pos = s.find("\xE2\x80\x99")) != std::string::npos;) {
    s.replace(pos, 3, "'");
  }
  return s;
}

bool has_keyword(const std::string& text, const std::string& keyword) {
  for (std::size_t pos = text.find(keyword); pos != std::string::npos;
       pos = text.find(keyword, pos + 1)) {
    if (pos == 0 || !ascii_alnum(static_cast<unsigned char>(text[pos - 1]))) return true;
  }
  return false;
}

}  // namespace

const std::vector<ClassifierRule>& builtin_classifier_rules() {
  static const std::vector<ClassifierRule> rules{
      {ReviewClass::BugReport,
       {"crash", "error", "bug", "freeze", "frozen", "broken", "fails", "fail", "stuck",
        "doesn't work", "not working", "won't open"}},
      {ReviewClass::FeatureRequest,
       {"add", "wish", "please", "feature", "would be", "could you", "suggest", "missing",
        "option"}},
  };
  return rules;
}

ReviewClass classify_review(std::string_view text) {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "cannot classify empty text");
  const std::string s = classification_form(text);
  for (const ClassifierRule& rule : builtin_classifier_rules()) {
    for (const std::string& kw : rule.keywords) {
      if (has_keyword(s, kw)) return rule.cls;
    }
  }
  return ReviewClass::Irrelevant;
}

HttpClassifier::HttpClassifier(std::string base_url) : base_url_(std::move(base_url)) {}

ReviewClass HttpClassifier::classify(std::string_view text) const {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "cannot classify empty text");
  const auto url = detail::split_url(base_url_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(5);
  auto res = client.Post(url.path + "/classify", json{{"text", text}}.dump(), "application/json");
  if (!res || res->status >= 400) {
    throw Error(ErrorCode::ProviderUnavailable,
                "classifier " + base_url_ + ": " +
                    (res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error())));
  }
  const json body = json::parse(res->body, nullptr, false);
  if (!body.is_object() || !body.contains("label") || !body["label"].is_string()) {
    throw Error(ErrorCode::ProviderUnavailable, "classifier returned a malformed body");
  }
  auto cls = parse_review_class(body["label"].get<std::string>());
  if (!cls) throw Error(ErrorCode::ProviderUnavailable, "classifier returned an unknown label");
  return *cls;
}

// ---------------------------------------------------------------------------

bool is_valid_language_tag(std::string_view tag) noexcept {
  static const std::regex pattern("^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$");
  return std::regex_match(tag.begin(), tag.end(), pattern);
}

TranslationCache::TranslationCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const std::uint64_t hash = std::stoull(j.at("input_hash").get<std::string>(), nullptr, 16);
      entries_[{j.at("provider").get<std::string>(), j.at("source_lang").get<std::string>(),
                j.at("target_lang").get<std::string>(), hash}] =
          j.at("output_text").get<std::string>();
    } catch (const std::exception& e) {
      throw ParseError(line_no, "translation cache " + file_->string() + ": " + e.what());
    }
  }
}

std::optional<std::string> TranslationCache::lookup(std::string_view provider,
                                                    std::string_view source,
                                                    std::string_view target,
                                                    std::uint64_t input_hash) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(
      Key{std::string(provider), std::string(source), std::string(target), input_hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranslationCache::store(const TranslationRecord& r) {
  std::unique_lock lock(mutex_);
  Key key{r.provider, r.source_lang, r.target_lang, r.input_hash};
  auto [it, inserted] = entries_.insert_or_assign(std::move(key), r.output_text);
  if (!file_) return;
  if (!inserted && it->second == r.output_text) return;
  std::filesystem::create_directories(file_->parent_path());
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw Error(ErrorCode::Storage, "cannot append to " + file_->string());
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.input_hash));
  out << json{{"provider", r.provider},
              {"source_lang", r.source_lang},
              {"target_lang", r.target_lang},
              {"input_hash", hash},
              {"output_text", r.output_text}}
             .dump()
      << '\n';
}

std::size_t TranslationCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

HttpTranslator::HttpTranslator(std::string base_url, std::string provider_id)
    : base_url_(std::move(base_url)), provider_id_(std::move(provider_id)) {}

std::string HttpTranslator::translate(std::string_view text, std::string_view source,
                                      std::string_view target) const {
  const auto url = detail::split_url(base_url_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const json request{{"q", text}, {"source", source}, {"target", target}};
  auto res = client.Post(url.path + "/translate", request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::ProviderUnavailable,
                provider_id_ + ": " + httplib::to_string(res.error()));
  }
  const json body = json::parse(res->body, nullptr, false);
  if (res->status == 400) {
    throw Error(ErrorCode::UnsupportedLanguage,
                provider_id_ + ": " +
                    (body.is_object() && body.contains("error") ? body["error"].dump()
                                                                 : std::string("HTTP 400")));
  }
  if (res->status >= 400) {
    throw Error(ErrorCode::ProviderUnavailable,
                provider_id_ + ": HTTP " + std::to_string(res->status));
  }
  if (!body.is_object() || !body.contains("translatedText") ||
      !body["translatedText"].is_string()) {
    throw Error(ErrorCode::ProviderUnavailable, provider_id_ + ": malformed response");
  }
  return body["translatedText"].get<std::string>();
}

RecordedTranslator::RecordedTranslator(std::string provider_id)
    : provider_id_(std::move(provider_id)) {}

RecordedTranslator RecordedTranslator::load(const std::filesystem::path& fixture,
                                            std::string provider_id) {
  std::ifstream in(fixture);
  if (!in) throw Error(ErrorCode::Storage, "cannot read fixture " + fixture.string());
  RecordedTranslator t(std::move(provider_id));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      t.record(j.at("q"), j.at("source"), j.at("target"), j.at("translatedText"));
    } catch (const json::exception& e) {
      throw ParseError(line_no, fixture.string() + ": " + e.what());
    }
  }
  return t;
}

void RecordedTranslator::record(std::string q, std::string source, std::string target,
                                std::string output) {
  table_[{std::move(q), std::move(source), std::move(target)}] = std::move(output);
}

std::string RecordedTranslator::translate(std::string_view text, std::string_view source,
                                          std::string_view target) const {
  auto it = table_.find({std::string(text), std::string(source), std::string(target)});
  if (it == table_.end()) {
    throw Error(ErrorCode::ProviderUnavailable,
                provider_id_ + ": no recording for \"" + std::string(text) + "\"");
  }
  return it->second;
}

Translator::Translator(std::shared_ptr<const TranslationAdapter> adapter,
                       std::shared_ptr<TranslationCache> cache, std::size_t max_in_flight,
                       std::optional<std::string> provider)
    : adapter_(std::move(adapter)),
      cache_(cache ? std::move(cache) : std::make_shared<TranslationCache>()),
      provider_(provider ? *provider : adapter_ ? adapter_->provider_id() : "none"),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(max_in_flight, 1, 64))) {}

std::string Translator::translate(std::string_view text, std::string_view source,
                                  std::string_view target) {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "cannot translate empty text");
  if (!is_valid_language_tag(target)) {
    throw Error(ErrorCode::UnsupportedLanguage, "invalid target language: " + std::string(target));
  }
  if (source != "auto" && !is_valid_language_tag(source)) {
    throw Error(ErrorCode::UnsupportedLanguage, "invalid source language: " + std::string(source));
  }
  if (source == target) return std::string(text);

  const std::uint64_t hash = fnv1a64(text);
  if (auto hit = cache_->lookup(provider_, source, target, hash)) return *hit;
  if (!adapter_) {
    throw Error(ErrorCode::ProviderUnavailable, "no translation provider configured");
  }

  in_flight_.acquire();
  std::string output;
  try {
    output = adapter_->translate(text, source, target);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  {
    std::lock_guard lock(stats_mutex_);
    ++adapter_calls_;
  }
  if (output.empty()) {
    throw Error(ErrorCode::ProviderUnavailable, provider_ + " returned an empty translation");
  }
  cache_->store({std::string(source), std::string(target), hash, output, provider_});
  return output;
}

// ---------------------------------------------------------------------------

Enricher::Enricher(std::shared_ptr<Translator> translator,
                   std::shared_ptr<const ReviewClassifier> classifier)
    : translator_(std::move(translator)),
      classifier_(classifier ? std::move(classifier) : std::make_shared<RuleClassifier>()) {}

Review Enricher::enrich(Review review, const EnrichOptions& opts) const {
  validate(review);
  if (opts.target) {
    if (review.original_lang == *opts.target) {
      review.translated_text = review.original_text;
    } else {
      if (!translator_) {
        throw Error(ErrorCode::ProviderUnavailable, "no translation provider configured");
      }
      review.translated_text =
          translator_->translate(review.original_text, review.original_lang, *opts.target);
    }
  }
  if (opts.classify) review.label = classifier_->classify(review.embed_text());
  return review;
}

}  // namespace crowdmatch
