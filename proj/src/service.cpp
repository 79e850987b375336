#include "crowdmatch/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <thread>

#include <unicode/unistr.h>

#include "crowdmatch/json_io.hpp"

namespace crowdmatch {

using nlohmann::json;

namespace {

struct BadBody {
  std::string message;
};

json parse_body(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw BadBody{"request body is not valid JSON"};
  if (!j.is_object()) throw BadBody{"request body must be a JSON object"};
  return j;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw BadBody{std::string("\"") + key + "\" must be a string"};
  return j.at(key).get<std::string>();
}

std::optional<std::int64_t> opt_integer(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw BadBody{std::string("\"") + key + "\" must be an integer"};
  return v.get<std::int64_t>();
}

std::string lower(std::string_view s) {
  std::string out;
  icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())))
      .foldCase()
      .toUTF8String(out);
  return out;
}

MatchOptions match_options_from(const json& j) {
  MatchOptions o;
  if (auto p = opt_string(j, "provider")) o.provider = *p;
  if (auto k = opt_integer(j, "k")) {
    if (*k < 1) throw BadBody{"\"k\" must be at least 1"};
    o.k = static_cast<std::size_t>(*k);
  }
  if (j.contains("threshold") && !j.at("threshold").is_null()) {
    const auto& t = j.at("threshold");
    if (!t.is_number()) throw BadBody{"\"threshold\" must be a number"};
    o.threshold = t.get<double>();
    if (!(*o.threshold >= -1.0 && *o.threshold <= 1.0)) {
      throw BadBody{"\"threshold\" must lie in [-1, 1]"};
    }
  }
  o.translate_to = opt_string(j, "translate_to");
  if (auto lang = opt_string(j, "lang")) o.source_lang = *lang;
  if (j.contains("classify_filter") && !j.at("classify_filter").is_null()) {
    const auto& f = j.at("classify_filter");
    if (!f.is_array()) throw BadBody{"\"classify_filter\" must be an array"};
    std::set<ReviewClass> classes;
    for (const auto& c : f) {
      const auto parsed = c.is_string() ? parse_review_class(c.get<std::string>()) : std::nullopt;
      if (!parsed) throw BadBody{"unknown review class in \"classify_filter\": " + c.dump()};
      classes.insert(*parsed);
    }
    o.classify_filter = std::move(classes);
  }
  return o;
}

template <typename Fn>
ApiResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const BadBody& e) {
    return api_error(400, "invalid_body", e.message);
  } catch (const Error& e) {
    return api_error(e);
  } catch (const std::exception& e) {
    return api_error(500, "internal_error", e.what());
  }
}

}  // namespace

ApiResponse api_error(int status, std::string_view code, std::string_view message) {
  return {status, error_json(code, message)};
}

ApiResponse api_error(const Error& e) {
  return api_error(http_status_for(e.code()), error_code_name(e.code()), e.what());
}

ApiService::ApiService(std::shared_ptr<AppContext> ctx) : ctx_(std::move(ctx)) {
  if (!ctx_) throw Error(ErrorCode::InvalidArgument, "service needs an app context");
}

ApiResponse ApiService::match(std::string_view body) const {
  return guarded([&] {
    const json j = parse_body(body);
    const auto text = opt_string(j, "text");
    if (!text || trim(*text).empty()) throw BadBody{"\"text\" must be a non-empty string"};
    const MatchOptions opts = match_options_from(j);
    const MatchResult r = ctx_->matcher().match_review(*text, opts);
    return ApiResponse{200, match_result_json(r, *ctx_->issues())};
  });
}

ApiResponse ApiService::triage(std::string_view body) {
  return guarded([&] {
    const json j = parse_body(body);
    const auto text = opt_string(j, "review_text");
    const auto id = opt_string(j, "review_id");
    if (text.has_value() == id.has_value()) {
      throw BadBody{"give exactly one of \"review_text\" and \"review_id\""};
    }
    if (text && trim(*text).empty()) throw BadBody{"\"review_text\" is empty"};
    const auto decision = opt_string(j, "decision");
    const auto kind = decision ? parse_triage_kind(*decision) : std::nullopt;
    if (!kind) throw BadBody{"\"decision\" must be one of linked, new_issue, dismissed"};
    const auto iid = opt_integer(j, "issue_iid");
    if (*kind == TriageKind::Linked && !iid) throw BadBody{"a linked decision needs \"issue_iid\""};
    if (*kind != TriageKind::Linked && iid) throw BadBody{"only linked decisions take \"issue_iid\""};

    std::lock_guard lock(write_mutex_);
    Workspace ws = ctx_->workspace();
    TriageDecision d;
    d.kind = *kind;
    d.issue_iid = iid;
    d.decided_by = opt_string(j, "decided_by").value_or("api");
    if (text) {
      if (iid && !ws.find_issue(*iid)) {
        throw Error(ErrorCode::UnknownIssue, "unknown issue: " + std::to_string(*iid));
      }
      Review r;
      r.id = content_hash(*text);
      r.original_text = *text;
      r.original_lang = opt_string(j, "lang").value_or("en");
      r.source = "triage";
      r.created_at = now_utc_iso();
      add_review(ws, std::move(r));
      d.review_id = content_hash(*text);
    } else {
      d.review_id = *id;
    }
    const TriageDecision stored = record_triage(ws, std::move(d));
    json out = stored;
    out["suggested_title"] = nullptr;
    if (stored.kind == TriageKind::NewIssueNeeded) {
      for (const auto& r : ws.load_reviews()) {
        if (r.id == stored.review_id) out["suggested_title"] = suggested_issue_title(r.embed_text());
      }
    }
    return ApiResponse{201, out};
  });
}

ApiResponse ApiService::stats() const {
  return guarded([&] {
    const CorpusStats s = corpus_stats(ctx_->workspace());
    json last = nullptr;
    if (auto report = load_last_eval(ctx_->workspace())) {
      last = json::object();
      for (const char* key : {"provider_id", "k", "n_gold", "n_hits", "hit_rate", "mrr"}) {
        if (report->contains(key)) last[key] = report->at(key);
      }
    }
    return ApiResponse{200, json{{"issues", s.issues},
                                 {"reviews", s.reviews},
                                 {"gold_links", s.gold_links},
                                 {"triage_decisions", s.triage_decisions},
                                 {"embeddings", s.embeddings},
                                 {"providers", ctx_->registry().list_providers()},
                                 {"last_eval", last}}};
  });
}

ApiResponse ApiService::issues(std::string_view query, std::string_view page_param) const {
  return guarded([&] {
    long page = 1;
    if (!page_param.empty()) {
      const auto* end = page_param.data() + page_param.size();
      const auto [ptr, ec] = std::from_chars(page_param.data(), end, page);
      if (ec != std::errc() || ptr != end || page < 1) {
        throw BadBody{"\"page\" must be a positive integer"};
      }
    }
    const std::string needle = lower(query);
    const auto all = ctx_->issues();
    std::vector<const Issue*> hits;
    for (const auto& [iid, issue] : *all) {
      if (needle.empty() || lower(issue.title).find(needle) != std::string::npos) {
        hits.push_back(&issue);
      }
    }
    json items = json::array();
    const std::size_t first = static_cast<std::size_t>(page - 1) * kIssuesPerPage;
    for (std::size_t i = first; i < hits.size() && i < first + kIssuesPerPage; ++i) {
      const Issue& issue = *hits[i];
      items.push_back({{"iid", issue.iid},
                       {"title", issue.title},
                       {"state", to_string(issue.state)},
                       {"url", issue.url ? json(*issue.url) : json(nullptr)},
                       {"labels", issue.labels}});
    }
    return ApiResponse{200, json{{"page", page},
                                 {"per_page", kIssuesPerPage},
                                 {"total", hits.size()},
                                 {"issues", items}}};
  });
}

// ---------------------------------------------------------------------------

struct ApiServer::Impl {
  std::shared_ptr<ApiService> service;
  std::string cors_origin;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  void send(httplib::Response& res, const ApiResponse& r) const {
    res.status = r.status;
    res.set_content(render_json(r.body), "application/json");
  }
};

ApiServer::ApiServer(std::shared_ptr<ApiService> service, std::string cors_origin)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->cors_origin = std::move(cors_origin);
  Impl* impl = impl_.get();
  auto& s = impl->server;

  // httplib also sets SO_REUSEPORT, which lets a second server share a busy port.
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  s.set_default_headers({{"Access-Control-Allow-Origin", impl->cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  s.Post("/api/match", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->send(res, impl->service->match(req.body));
  });
  s.Post("/api/triage", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->send(res, impl->service->triage(req.body));
  });
  s.Get("/api/stats", [impl](const httplib::Request&, httplib::Response& res) {
    impl->send(res, impl->service->stats());
  });
  s.Get("/api/issues", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->send(res, impl->service->issues(req.get_param_value("query"),
                                          req.get_param_value("page")));
  });
  s.set_error_handler([impl](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const int status = res.status;
    impl->send(res, api_error(status, status == 404 ? "not_found" : "invalid_request",
                              "no route for " + req.method + " " + req.path));
  });
  s.set_exception_handler(
      [impl](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unexpected failure";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        impl->send(res, api_error(500, "internal_error", what));
      });
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) {
    throw Error(ErrorCode::NetworkFailure, "cannot listen on " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound;
}

void ApiServer::run() {
  if (!impl_->bound) bind("127.0.0.1", 0);
  impl_->server.listen_after_bind();
}

void ApiServer::start() {
  if (!impl_->bound) bind("127.0.0.1", 0);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace crowdmatch
