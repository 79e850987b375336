#include "crowdmatch/embedding.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "http_util.hpp"

namespace crowdmatch {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> check_dim(std::vector<double> values, std::size_t dim,
                              std::string_view who) {
  if (values.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(who) + " returned " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(dim));
  }
  return values;
}

}  // namespace

// ---------------------------------------------------------------------------

EmbeddingVector reference_hash_embed(std::string_view text, std::size_t dim,
                                     const StopwordList& stopwords) {
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "hash embedding dim must be >= 2");
  const std::vector<TokenSpan> tokens = basic_tokenize(text);
  if (tokens.empty()) throw Error(ErrorCode::EmptyText, "text has no tokens");

  std::vector<std::size_t> kept = content_filter(tokens, stopwords);
  if (kept.empty()) {
    kept.resize(tokens.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  }

  std::vector<double> buckets(dim, 0.0);
  for (std::size_t index : kept) {
    const std::uint64_t h = fnv1a64(tokens[index].text);
    const double sign = (h >> 63) == 0 ? 1.0 : -1.0;
    buckets[h % dim] += sign;
  }
  const std::string id = "ref-" + std::to_string(dim);
  if (l2_norm(buckets) == 0.0) {
    // Signed collisions cancelled out entirely.
    throw Error(ErrorCode::EmptyText, "hashed features cancel to a zero vector");
  }
  return l2_normalize(EmbeddingVector(id, std::move(buckets)));
}

HashEmbedder::HashEmbedder(std::size_t dim, std::shared_ptr<const StopwordList> stopwords)
    : dim_(dim), stopwords_(std::move(stopwords)) {
  if (dim_ < 2) throw Error(ErrorCode::InvalidArgument, "hash embedding dim must be >= 2");
}

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
  return reference_hash_embed(text, dim_, stopwords_ ? *stopwords_ : StopwordList::builtin());
}

// ---------------------------------------------------------------------------

HashContextBackend::HashContextBackend(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "backend dim must be positive");
}

TokenEmbeddings HashContextBackend::contextual_token_embeddings(std::string_view normalized) const {
  TokenEmbeddings out;
  out.tokens = tokenize_normalized(normalized);
  std::vector<std::vector<double>> base;
  base.reserve(out.tokens.size());
  for (const TokenSpan& t : out.tokens) {
    std::uint64_t state = fnv1a64(t.text);
    std::vector<double> v(dim_);
    for (double& x : v) {
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    base.push_back(std::move(v));
  }
  const std::string id = backend_id();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> v = base[i];
    for (std::size_t d = 0; d < dim_; ++d) {
      if (i > 0) v[d] += 0.5 * base[i - 1][d];
      if (i + 1 < base.size()) v[d] += 0.5 * base[i + 1][d];
    }
    out.vectors.emplace_back(id, std::move(v));
  }
  return out;
}

EmbeddingVector pooled_contextual_embed(const TokenEmbeddingBackend& backend,
                                        const TokenFilter& filter, std::string_view text) {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "text is empty");
  const std::string normalized = normalize_text(text);
  TokenEmbeddings te = backend.contextual_token_embeddings(normalized);
  if (te.vectors.size() != te.tokens.size()) {
    throw Error(ErrorCode::BackendUnavailable,
                backend.backend_id() + " returned mismatched token/vector counts");
  }
  if (te.vectors.empty()) throw Error(ErrorCode::EmptyText, "backend produced no tokens");
  for (const auto& v : te.vectors) {
    if (v.dim() != backend.dim()) {
      throw Error(ErrorCode::DimensionMismatch, backend.backend_id() + " vector has wrong dim");
    }
  }

  const FilteredTokens selected = filter.select(normalized);
  const AlignmentMap mapping = align_tokens(selected.tokens, te.tokens);
  std::vector<bool> keep(te.tokens.size(), false);
  for (std::size_t i : selected.kept) {
    for (std::size_t j : mapping[i]) keep[j] = true;
  }
  std::vector<EmbeddingVector> pooled;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    if (keep[j]) pooled.push_back(te.vectors[j]);
  }
  const std::string id = "pooled:" + backend.backend_id() + ":" + filter.filter_id();
  if (pooled.empty()) return mean_pool(te.vectors).with_provider(id);
  return mean_pool(pooled).with_provider(id);
}

PooledContextualEmbedder::PooledContextualEmbedder(
    std::shared_ptr<const TokenEmbeddingBackend> backend,
    std::shared_ptr<const TokenFilter> filter)
    : backend_(std::move(backend)), filter_(std::move(filter)) {
  if (!backend_ || !filter_) {
    throw Error(ErrorCode::InvalidArgument, "pooled embedder needs a backend and a filter");
  }
}

std::string PooledContextualEmbedder::provider_id() const {
  return "pooled:" + backend_->backend_id() + ":" + filter_->filter_id();
}

EmbeddingVector PooledContextualEmbedder::embed(std::string_view text) const {
  return pooled_contextual_embed(*backend_, *filter_, text);
}

// ---------------------------------------------------------------------------

EmbeddingVector sentence_embed(const SentenceModelAdapter& adapter, std::string_view text) {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "text is empty");
  auto batch = adapter.embed_batch({std::string(text)});
  if (batch.size() != 1) {
    throw Error(ErrorCode::BackendUnavailable,
                adapter.provider_id() + " returned " + std::to_string(batch.size()) +
                    " vectors for one text");
  }
  return {adapter.provider_id(),
          check_dim(std::move(batch.front()), adapter.dim(), adapter.provider_id())};
}

SentenceEmbedder::SentenceEmbedder(std::shared_ptr<const SentenceModelAdapter> adapter)
    : adapter_(std::move(adapter)) {
  if (!adapter_) throw Error(ErrorCode::InvalidArgument, "sentence embedder needs an adapter");
}

EmbeddingVector SentenceEmbedder::embed(std::string_view text) const {
  return sentence_embed(*adapter_, text);
}

HttpSentenceAdapter::HttpSentenceAdapter(std::string provider_id, std::string base_url,
                                         std::string model, std::size_t dim)
    : provider_id_(std::move(provider_id)),
      base_url_(std::move(base_url)),
      model_(std::move(model)),
      dim_(dim) {}

std::vector<std::vector<double>> HttpSentenceAdapter::embed_batch(
    const std::vector<std::string>& texts) const {
  const detail::UrlParts url = detail::split_url(base_url_);
  const json request = {{"texts", texts}, {"model", model_}};

  std::lock_guard lock(mutex_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  auto res = client.Post(url.path + "/embed", request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::BackendUnavailable,
                provider_id_ + ": " + httplib::to_string(res.error()));
  }
  json body = json::parse(res->body, nullptr, false);
  if (res->status >= 400) {
    std::string message = body.is_object() && body.contains("error")
                              ? body["error"].get<std::string>()
                              : "HTTP " + std::to_string(res->status);
    throw Error(ErrorCode::BackendUnavailable, provider_id_ + ": " + message);
  }
  if (!body.is_object() || !body.contains("vectors")) {
    throw Error(ErrorCode::BackendUnavailable, provider_id_ + ": malformed /embed response");
  }
  if (body.contains("dim") && body["dim"].get<std::size_t>() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                provider_id_ + ": endpoint reports dim " + body["dim"].dump());
  }
  auto vectors = body["vectors"].get<std::vector<std::vector<double>>>();
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::BackendUnavailable, provider_id_ + ": vector count mismatch");
  }
  return vectors;
}

RecordedSentenceAdapter::RecordedSentenceAdapter(std::string provider_id, std::string model,
                                                 std::size_t dim)
    : provider_id_(std::move(provider_id)), model_(std::move(model)), dim_(dim) {}

RecordedSentenceAdapter RecordedSentenceAdapter::load(const std::filesystem::path& fixture) {
  std::ifstream in(fixture);
  if (!in) throw Error(ErrorCode::Storage, "cannot read fixture " + fixture.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Storage, "bad fixture " + fixture.string() + ": " + e.what());
  }
  RecordedSentenceAdapter adapter(doc.at("provider_id").get<std::string>(),
                                  doc.value("model", std::string{}),
                                  doc.at("dim").get<std::size_t>());
  for (const json& rec : doc.at("recordings")) {
    const auto texts = rec.at("request").at("texts").get<std::vector<std::string>>();
    auto vectors = rec.at("response").at("vectors").get<std::vector<std::vector<double>>>();
    if (texts.size() != vectors.size()) {
      throw Error(ErrorCode::Storage, "fixture recording has mismatched texts/vectors");
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      adapter.table_[texts[i]] = std::move(vectors[i]);
    }
  }
  return adapter;
}

void RecordedSentenceAdapter::record(const std::string& text, std::vector<double> vector) {
  table_[text] = std::move(vector);
}

void RecordedSentenceAdapter::save(const std::filesystem::path& fixture) const {
  json recordings = json::array();
  for (const auto& [text, vector] : table_) {
    recordings.push_back({{"request", {{"texts", {text}}, {"model", model_}}},
                          {"response", {{"dim", vector.size()}, {"vectors", {vector}}}}});
  }
  const json doc = {{"provider_id", provider_id_},
                    {"model", model_},
                    {"dim", dim_},
                    {"recordings", recordings}};
  std::ofstream out(fixture);
  if (!out) throw Error(ErrorCode::Storage, "cannot write fixture " + fixture.string());
  out << doc.dump() << '\n';
}

std::vector<std::vector<double>> RecordedSentenceAdapter::embed_batch(
    const std::vector<std::string>& texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    auto it = table_.find(text);
    if (it == table_.end()) {
      throw Error(ErrorCode::BackendUnavailable,
                  provider_id_ + ": no recording for text \"" + text + "\"");
    }
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

void ProviderRegistry::register_provider(std::shared_ptr<const EmbeddingProvider> provider) {
  if (!provider) throw Error(ErrorCode::InvalidArgument, "null provider");
  std::unique_lock lock(mutex_);
  auto id = provider->provider_id();
  if (providers_.contains(id)) {
    throw Error(ErrorCode::DuplicateProvider, "provider already registered: " + id);
  }
  providers_.emplace(std::move(id), std::move(provider));
}

std::shared_ptr<const EmbeddingProvider> ProviderRegistry::get_provider(std::string_view id) const {
  std::shared_lock lock(mutex_);
  auto it = providers_.find(id);
  if (it == providers_.end()) {
    throw Error(ErrorCode::UnknownProvider, "unknown provider: " + std::string(id));
  }
  return it->second;
}

bool ProviderRegistry::contains(std::string_view id) const {
  std::shared_lock lock(mutex_);
  return providers_.find(id) != providers_.end();
}

std::vector<std::string> ProviderRegistry::list_providers() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : providers_) ids.push_back(id);
  return ids;
}

void register_builtin_providers(ProviderRegistry& registry) {
  registry.register_provider(std::make_shared<HashEmbedder>(kDefaultDim));
  registry.register_provider(std::make_shared<PooledContextualEmbedder>(
      std::make_shared<HashContextBackend>(kDefaultDim), std::make_shared<StopwordFilter>()));
}

}  // namespace crowdmatch
