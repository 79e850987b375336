#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowdmatch/embedding.hpp"
#include "crowdmatch/enrichment.hpp"
#include "crowdmatch/model.hpp"

namespace crowdmatch {

inline constexpr int kSchemaVersion = 1;

enum class LinkOrigin { Imported, Triage };

struct GoldLink {
  std::string review_id;
  std::int64_t issue_iid = 0;
  LinkOrigin origin = LinkOrigin::Imported;
  std::string decided_at;

  friend bool operator==(const GoldLink&, const GoldLink&) = default;
};

enum class TriageKind { Linked, NewIssueNeeded, Dismissed };

std::string_view to_string(TriageKind k) noexcept;
/// "linked", "new_issue", "dismissed".
std::optional<TriageKind> parse_triage_kind(std::string_view s) noexcept;

struct TriageDecision {
  std::string review_id;
  TriageKind kind = TriageKind::Dismissed;
  std::optional<std::int64_t> issue_iid;  // set iff kind == Linked
  std::string decided_by;
  std::string decided_at;

  friend bool operator==(const TriageDecision&, const TriageDecision&) = default;
};

enum class EmbeddingKind { Issue, Review };

std::string_view to_string(EmbeddingKind k) noexcept;

struct StoredEmbedding {
  EmbeddingKind kind = EmbeddingKind::Issue;
  std::string record_id;  // issue iid in decimal, or review id
  std::string text_hash;  // content_hash of the embedded text
  EmbeddingVector vector;

  friend bool operator==(const StoredEmbedding&, const StoredEmbedding&) = default;
};

struct LinkLog {
  std::vector<GoldLink> gold;
  std::vector<TriageDecision> triage;

  const GoldLink* gold_for(std::string_view review_id) const;
  friend bool operator==(const LinkLog&, const LinkLog&) = default;
};

struct WorkspaceMeta {
  int schema_version = kSchemaVersion;
  std::string project_ref;

  friend bool operator==(const WorkspaceMeta&, const WorkspaceMeta&) = default;
};

/// Exclusive writer lock on <root>/.lock (flock). Waits up to `timeout`,
/// then throws WorkspaceLocked.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& root,
                         std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  int fd_ = -1;
};

/// A directory of line-delimited JSON files:
///   meta.json, issues.jsonl, reviews.jsonl, links.jsonl,
///   embeddings/<provider_id>.jsonl, translations.jsonl, config.json (optional)
/// Whole-file rewrites go through a temp file and rename.
class Workspace {
 public:
  /// Opens `root`, initializing an empty workspace when meta.json is absent.
  static Workspace create(const std::filesystem::path& root);
  /// Throws Storage when meta.json is absent, SchemaMismatch on a version mismatch.
  static Workspace open(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }

  WorkspaceMeta meta() const;
  void save_meta(const WorkspaceMeta& meta) const;

  std::vector<Issue> load_issues() const;  // sorted by iid
  void save_issues(std::vector<Issue> issues) const;
  std::optional<Issue> find_issue(std::int64_t iid) const;

  std::vector<Review> load_reviews() const;  // sorted by id
  void save_reviews(std::vector<Review> reviews) const;

  LinkLog load_links() const;
  void save_links(const LinkLog& log) const;
  void append_links(std::span<const GoldLink> gold, std::span<const TriageDecision> triage) const;

  /// Empty when no file exists for the provider.
  std::vector<StoredEmbedding> load_embeddings(std::string_view provider_id) const;
  /// Sorted: issues by iid, then reviews by id.
  void save_embeddings(std::string_view provider_id, std::vector<StoredEmbedding> records) const;
  /// Provider ids with an embeddings file, sorted.
  std::vector<std::string> embedding_providers() const;

  std::filesystem::path embeddings_file(std::string_view provider_id) const;
  std::filesystem::path translations_file() const { return root_ / "translations.jsonl"; }
  std::filesystem::path config_file() const { return root_ / "config.json"; }
  std::filesystem::path collect_state_file() const { return root_ / ".collect_state.json"; }

 private:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}
  std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// Issue collection

struct HttpReply {
  int status = 0;
  std::map<std::string, std::string> headers;  // keys lowercased
  std::string body;

  std::optional<std::string> header(std::string_view name) const;
};

/// GET against one origin. Throws NetworkFailure when the server is unreachable.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpReply get(const std::string& path_and_query,
                        const std::map<std::string, std::string>& headers) = 0;
};

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::string origin);
  HttpReply get(const std::string& path_and_query,
                const std::map<std::string, std::string>& headers) override;

 private:
  std::string origin_;
};

struct ProjectRef {
  std::string origin;      // e.g. https://gitlab.com
  std::string project_id;  // URL-encoded path or numeric id
};

/// Accepts "https://host/group/project", "group/project" or a numeric id.
ProjectRef parse_project_ref(std::string_view ref,
                             std::string_view default_origin = "https://gitlab.com");

/// "/api/v4/projects/{id}/issues?per_page=100&page=N"
std::string issues_page_path(const ProjectRef& project, int page);

struct CollectOptions {
  std::optional<std::string> auth_token;
  std::optional<std::string> translate_to;
  Translator* translator = nullptr;  // required when translate_to is set
  int max_rate_limit_retries = 3;
  std::function<void(std::chrono::seconds)> sleep;  // defaults to this_thread::sleep_for
};

struct CollectReport {
  std::size_t fetched = 0;  // issues received in this run
  std::size_t stored = 0;   // issues in the workspace afterwards
  int pages = 0;
  int first_page = 1;       // > 1 when resuming an interrupted run
};

/// Pages through the tracker until X-Next-Page is empty, upserting issues
/// by iid after every page. Progress survives failures: a rerun resumes at
/// the first unfinished page.
/// Throws AuthFailure, NetworkFailure, RateLimited.
CollectReport collect_issues(Workspace& ws, HttpTransport& transport, std::string_view project_ref,
                             const CollectOptions& opts = {});

/// Parses one tracker issue object.
Issue issue_from_tracker_json(const std::string& json_object);

/// Upserts issues from a JSONL file of workspace issue records (offline
/// alternative to collect_issues). Validates every line before writing.
/// Returns the number of records read. Throws ParseError(line), also for a
/// repeated iid.
std::size_t import_issues(Workspace& ws, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Review import

enum class ImportFormat { Csv, Jsonl };

/// Guesses from the extension; defaults to CSV.
ImportFormat import_format_for(const std::filesystem::path& path);

struct ImportReport {
  std::size_t reviews = 0;     // rows in the file, all now stored
  std::size_t gold_links = 0;  // rows carrying an issue iid
  std::size_t added = 0;       // reviews that were not stored before
};

/// CSV: UTF-8, header row, columns id,text,lang,issue_iid (only text is
/// required). JSONL: objects with the same keys. Nothing is written when any
/// row fails. Throws ParseError(line), DuplicateId.
ImportReport import_reviews(Workspace& ws, const std::filesystem::path& path,
                            ImportFormat format, std::string_view lang);

// ---------------------------------------------------------------------------

struct UpsertReport {
  std::size_t embedded = 0;
  std::size_t skipped = 0;  // already up to date
  std::vector<std::pair<std::string, std::string>> failures;  // (record id, message)
};

/// Embeds every record of `kind` lacking an up-to-date vector for the
/// provider. Per-record failures are collected, not thrown.
UpsertReport upsert_embeddings(Workspace& ws, const EmbeddingProvider& provider,
                               EmbeddingKind kind);

/// Stores one review unless a review with its id exists. Returns true when
/// added. Throws DuplicateId when the stored text differs.
bool add_review(Workspace& ws, Review review);

/// Appends the decision; a Linked decision also adds a triage gold link
/// unless the review already has one. Throws UnknownReview, UnknownIssue,
/// InvalidArgument.
TriageDecision record_triage(Workspace& ws, TriageDecision decision);

struct CorpusStats {
  std::size_t issues = 0;
  std::size_t reviews = 0;
  std::size_t gold_links = 0;
  std::size_t triage_decisions = 0;
  std::map<std::string, std::size_t> embeddings;  // provider -> stored vectors
};

CorpusStats corpus_stats(const Workspace& ws);

}  // namespace crowdmatch
