#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdmatch/corpus.hpp"
#include "crowdmatch/embedding.hpp"
#include "crowdmatch/enrichment.hpp"
#include "crowdmatch/matcher.hpp"

namespace crowdmatch {

// Optional <workspace>/config.json. Relative paths resolve against the
// workspace root.
//
// {
//   "providers": [
//     {"type": "recorded_sentence", "fixture": "fixtures/a.json"},
//     {"type": "http_sentence", "id": "sbert", "url": "http://h:1", "model": "m", "dim": 768},
//     {"type": "reference", "dim": 512}
//   ],
//   "translator": {"type": "http", "url": "...", "provider": "libre"}
//               | {"type": "recorded", "fixture": "..."},
//   "classifier": {"type": "rules"} | {"type": "http", "url": "..."},
//   "default_provider": "sbert",
//   "max_in_flight": 4,
//   "cors_origin": "http://localhost:5173"
// }
struct AppConfig {
  nlohmann::json providers = nlohmann::json::array();
  nlohmann::json translator;  // null: cache only
  nlohmann::json classifier;  // null: rules
  std::optional<std::string> default_provider;
  std::size_t max_in_flight = 4;
  std::string cors_origin = "*";
};

/// Defaults when the file is absent; ParseError when malformed.
AppConfig load_app_config(const Workspace& ws);

/// Everything a command or request needs, wired from one workspace.
class AppContext {
 public:
  static std::shared_ptr<AppContext> open(const std::filesystem::path& workspace);

  const Workspace& workspace() const noexcept { return matcher_->workspace(); }
  const AppConfig& config() const noexcept { return config_; }
  const ProviderRegistry& registry() const noexcept { return *registry_; }
  const Matcher& matcher() const noexcept { return *matcher_; }
  const Enricher& enricher() const noexcept { return *enricher_; }
  Translator* translator() const noexcept { return translator_.get(); }

  /// iid -> issue, loaded once.
  std::shared_ptr<const std::map<std::int64_t, Issue>> issues() const;
  void reload_issues() const;

 private:
  AppConfig config_;
  std::shared_ptr<ProviderRegistry> registry_;
  std::shared_ptr<Translator> translator_;
  std::shared_ptr<Enricher> enricher_;
  std::unique_ptr<Matcher> matcher_;
  mutable std::mutex issues_mutex_;
  mutable std::shared_ptr<const std::map<std::int64_t, Issue>> issues_;
};

/// The match payload shared by `match --format json` and POST /api/match.
nlohmann::json match_result_json(const MatchResult& r,
                                 const std::map<std::int64_t, Issue>& issues);

/// The one serialization used for every JSON document the tools emit.
std::string render_json(const nlohmann::json& j);

/// Summary of the most recent `eval` run, kept at <workspace>/last_eval.json.
void save_last_eval(const Workspace& ws, const nlohmann::json& report);
std::optional<nlohmann::json> load_last_eval(const Workspace& ws);

/// Suggested title for a new issue: the first 8 content tokens.
std::string suggested_issue_title(std::string_view review_text);

/// HTTP status for a failure of the given kind.
int http_status_for(ErrorCode code) noexcept;

/// Process exit code: 1 usage, 2 data or provider, 3 network.
int exit_code_for(ErrorCode code) noexcept;

nlohmann::json error_json(std::string_view code, std::string_view message);

}  // namespace crowdmatch
