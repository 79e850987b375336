#include "crowdmatch/app.hpp"

#include <fstream>

#include "crowdmatch/text.hpp"

namespace crowdmatch {

namespace {

std::filesystem::path resolve(const Workspace& ws, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : ws.root() / path;
}

std::string str_field(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::ParseError, std::string(what) + " needs a string \"" + key + "\"");
  }
  return j.at(key).get<std::string>();
}

std::shared_ptr<const EmbeddingProvider> make_provider(const Workspace& ws,
                                                       const nlohmann::json& spec) {
  const std::string type = str_field(spec, "type", "provider entry");
  if (type == "recorded_sentence") {
    auto adapter = std::make_shared<RecordedSentenceAdapter>(
        RecordedSentenceAdapter::load(resolve(ws, str_field(spec, "fixture", "recorded_sentence"))));
    return std::make_shared<SentenceEmbedder>(adapter);
  }
  if (type == "http_sentence") {
    auto adapter = std::make_shared<HttpSentenceAdapter>(
        str_field(spec, "id", "http_sentence"), str_field(spec, "url", "http_sentence"),
        spec.value("model", std::string{}), spec.value("dim", kDefaultDim));
    return std::make_shared<SentenceEmbedder>(adapter);
  }
  if (type == "reference") {
    return std::make_shared<HashEmbedder>(spec.value("dim", kDefaultDim));
  }
  throw Error(ErrorCode::ParseError, "unknown provider type: " + type);
}

}  // namespace

AppConfig load_app_config(const Workspace& ws) {
  AppConfig cfg;
  std::ifstream in(ws.config_file());
  if (!in) return cfg;
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config.json must hold an object");
    cfg.providers = j.value("providers", nlohmann::json::array());
    if (!cfg.providers.is_array()) {
      throw Error(ErrorCode::ParseError, "config \"providers\" must be an array");
    }
    if (j.contains("translator")) cfg.translator = j.at("translator");
    if (j.contains("classifier")) cfg.classifier = j.at("classifier");
    if (j.contains("default_provider")) {
      cfg.default_provider = j.at("default_provider").get<std::string>();
    }
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.cors_origin = j.value("cors_origin", cfg.cors_origin);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config.json: ") + e.what());
  }
  return cfg;
}

std::shared_ptr<AppContext> AppContext::open(const std::filesystem::path& workspace) {
  auto ctx = std::shared_ptr<AppContext>(new AppContext());
  Workspace ws = Workspace::open(workspace);
  ctx->config_ = load_app_config(ws);

  ctx->registry_ = std::make_shared<ProviderRegistry>();
  register_builtin_providers(*ctx->registry_);
  for (const auto& spec : ctx->config_.providers) {
    auto provider = make_provider(ws, spec);
    // A configured "reference" at the default dim duplicates the builtin.
    if (!ctx->registry_->contains(provider->provider_id())) {
      ctx->registry_->register_provider(std::move(provider));
    }
  }

  std::shared_ptr<const TranslationAdapter> adapter;
  const auto& t = ctx->config_.translator;
  if (t.is_object()) {
    const std::string type = str_field(t, "type", "translator");
    if (type == "http") {
      adapter = std::make_shared<HttpTranslator>(str_field(t, "url", "translator"),
                                                 t.value("provider", std::string("http-translate")));
    } else if (type == "recorded") {
      adapter = std::make_shared<RecordedTranslator>(
          RecordedTranslator::load(resolve(ws, str_field(t, "fixture", "translator"))));
    } else {
      throw Error(ErrorCode::ParseError, "unknown translator type: " + type);
    }
  }
  auto cache = std::make_shared<TranslationCache>(ws.translations_file());
  ctx->translator_ =
      std::make_shared<Translator>(adapter, cache, ctx->config_.max_in_flight);

  std::shared_ptr<const ReviewClassifier> classifier;
  const auto& c = ctx->config_.classifier;
  if (c.is_object()) {
    const std::string type = str_field(c, "type", "classifier");
    if (type == "http") {
      classifier = std::make_shared<HttpClassifier>(str_field(c, "url", "classifier"));
    } else if (type != "rules") {
      throw Error(ErrorCode::ParseError, "unknown classifier type: " + type);
    }
  }
  ctx->enricher_ = std::make_shared<Enricher>(ctx->translator_, classifier);
  ctx->matcher_ = std::make_unique<Matcher>(ws, ctx->registry_, ctx->enricher_);
  return ctx;
}

std::shared_ptr<const std::map<std::int64_t, Issue>> AppContext::issues() const {
  std::lock_guard lock(issues_mutex_);
  if (!issues_) {
    auto map = std::make_shared<std::map<std::int64_t, Issue>>();
    for (auto& i : workspace().load_issues()) map->emplace(i.iid, std::move(i));
    issues_ = std::move(map);
  }
  return issues_;
}

void AppContext::reload_issues() const {
  std::lock_guard lock(issues_mutex_);
  issues_.reset();
}

nlohmann::json match_result_json(const MatchResult& r,
                                 const std::map<std::int64_t, Issue>& issues) {
  using nlohmann::json;
  json candidates = json::array();
  for (const auto& c : r.candidates) {
    const auto it = issues.find(c.issue_iid);
    json cand = {{"rank", c.rank},
                 {"iid", c.issue_iid},
                 {"title", it != issues.end() ? json(it->second.title) : json(nullptr)},
                 {"url", it != issues.end() && it->second.url ? json(*it->second.url) : json(nullptr)},
                 {"similarity", c.similarity},
                 {"similarity_percent", similarity_percent(c.similarity)}};
    candidates.push_back(std::move(cand));
  }
  json j = {{"review_id", r.review_id ? json(*r.review_id) : json(nullptr)},
            {"query_text", r.query_text},
            {"provider_id", r.provider_id},
            {"k_requested", r.k_requested},
            {"threshold_applied", r.threshold_applied ? json(*r.threshold_applied) : json(nullptr)},
            {"filtered_out", r.filtered_out},
            {"candidates", std::move(candidates)}};
  if (r.translated_text) j["translated_text"] = *r.translated_text;
  if (r.label) j["label"] = std::string(to_string(*r.label));
  return j;
}

std::string render_json(const nlohmann::json& j) { return j.dump(2); }

void save_last_eval(const Workspace& ws, const nlohmann::json& report) {
  const auto path = ws.root() / "last_eval.json";
  const auto tmp = ws.root() / "last_eval.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Storage, "cannot write " + tmp.string());
    out << render_json(report) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Storage, "cannot replace " + path.string());
}

std::optional<nlohmann::json> load_last_eval(const Workspace& ws) {
  std::ifstream in(ws.root() / "last_eval.json");
  if (!in) return std::nullopt;
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::string suggested_issue_title(std::string_view review_text) {
  const auto tokens = basic_tokenize(review_text);
  const auto kept = content_filter(tokens);
  std::string out;
  for (std::size_t i = 0; i < kept.size() && i < 8; ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[kept[i]].text;
  }
  return out;
}

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyInput:
    case ErrorCode::EmptyText:
    case ErrorCode::ParseError:
    case ErrorCode::UnsupportedLanguage:
    case ErrorCode::ZeroVector:
      return 400;
    case ErrorCode::UnknownReview:
    case ErrorCode::UnknownIssue:
      return 404;
    case ErrorCode::NoEmbeddings:
    case ErrorCode::UnknownProvider:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DuplicateId:
    case ErrorCode::DuplicateProvider:
    case ErrorCode::EmptyGoldSet:
    case ErrorCode::MissingResult:
      return 409;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::NetworkFailure:
    case ErrorCode::AuthFailure:
    case ErrorCode::RateLimited:
      return 502;
    case ErrorCode::WorkspaceLocked:
      return 503;
    case ErrorCode::SchemaMismatch:
    case ErrorCode::Storage:
      return 500;
  }
  return 500;
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return 1;
    case ErrorCode::NetworkFailure:
    case ErrorCode::AuthFailure:
    case ErrorCode::RateLimited:
      return 3;
    default:
      return 2;
  }
}

nlohmann::json error_json(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace crowdmatch
