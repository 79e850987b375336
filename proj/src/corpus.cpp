#include "crowdmatch/corpus.hpp"

#include <fcntl.h>
#include <httplib.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "crowdmatch/json_io.hpp"

namespace crowdmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Storage, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Storage, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Storage, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Storage, "cannot replace " + path.string() + ": " + ec.message());
}

void append_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Storage, "cannot append to " + path.string());
  out << content;
}

// Calls fn(json, line_no) for each non-blank line; missing file reads as empty.
template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const json::exception& e) {
      throw ParseError(line_no, path.filename().string() + ": " + e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, path.filename().string() + ": " + e.what());
    }
  }
}

template <typename T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) {
    out += json(r).dump();
    out += '\n';
  }
  return out;
}

std::string encode_provider_file(std::string_view id) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string decode_provider_file(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out += static_cast<char>(std::stoi(std::string(name.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += name[i];
    }
  }
  return out;
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::int64_t parse_iid(std::string_view s, std::size_t line) {
  std::int64_t value = 0;
  const std::string_view t = trim(s);
  if (t.empty() || t.size() > 18 ||
      !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError(line, "issue_iid must be a positive integer, got \"" + std::string(s) + "\"");
  }
  for (char c : t) value = value * 10 + (c - '0');
  if (value <= 0) throw ParseError(line, "issue_iid must be positive");
  return value;
}

}  // namespace

std::string_view to_string(TriageKind k) noexcept {
  switch (k) {
    case TriageKind::Linked: return "linked";
    case TriageKind::NewIssueNeeded: return "new_issue";
    case TriageKind::Dismissed: return "dismissed";
  }
  return "dismissed";
}

std::optional<TriageKind> parse_triage_kind(std::string_view s) noexcept {
  if (s == "linked") return TriageKind::Linked;
  if (s == "new_issue") return TriageKind::NewIssueNeeded;
  if (s == "dismissed") return TriageKind::Dismissed;
  return std::nullopt;
}

std::string_view to_string(EmbeddingKind k) noexcept {
  return k == EmbeddingKind::Issue ? "issue" : "review";
}

const GoldLink* LinkLog::gold_for(std::string_view review_id) const {
  for (const auto& g : gold) {
    if (g.review_id == review_id) return &g;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

WorkspaceLock::WorkspaceLock(const fs::path& root, std::chrono::milliseconds timeout) {
  const fs::path path = root / ".lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::Storage, "cannot open lock file " + path.string());
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    if (std::chrono::steady_clock::now() >= deadline) {
      ::close(fd_);
      fd_ = -1;
      throw Error(ErrorCode::WorkspaceLocked, "workspace is locked by another writer: " +
                                                  root.string());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

WorkspaceLock::~WorkspaceLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Workspace Workspace::create(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "embeddings", ec);
  if (ec) throw Error(ErrorCode::Storage, "cannot create workspace " + root.string());
  Workspace ws(root);
  if (!fs::exists(root / "meta.json")) ws.save_meta({});
  return open(root);
}

Workspace Workspace::open(const fs::path& root) {
  if (!fs::exists(root / "meta.json")) {
    throw Error(ErrorCode::Storage, "not a workspace (no meta.json): " + root.string());
  }
  Workspace ws(root);
  const WorkspaceMeta meta = ws.meta();
  if (meta.schema_version != kSchemaVersion) {
    throw Error(ErrorCode::SchemaMismatch,
                "workspace schema " + std::to_string(meta.schema_version) +
                    " is not supported (expected " + std::to_string(kSchemaVersion) + ")");
  }
  return ws;
}

WorkspaceMeta Workspace::meta() const {
  json j;
  try {
    j = json::parse(read_file(root_ / "meta.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Storage, std::string("bad meta.json: ") + e.what());
  }
  return {j.value("schema_version", 0), j.value("project_ref", std::string{})};
}

void Workspace::save_meta(const WorkspaceMeta& meta) const {
  write_file_atomic(root_ / "meta.json",
                    json{{"schema_version", meta.schema_version}, {"project_ref", meta.project_ref}}
                            .dump(2) +
                        "\n");
}

std::vector<Issue> Workspace::load_issues() const {
  std::vector<Issue> issues;
  for_each_jsonl(root_ / "issues.jsonl", [&](const json& j, std::size_t) {
    Issue issue = j.get<Issue>();
    validate(issue);
    issues.push_back(std::move(issue));
  });
  std::sort(issues.begin(), issues.end(),
            [](const Issue& a, const Issue& b) { return a.iid < b.iid; });
  return issues;
}

void Workspace::save_issues(std::vector<Issue> issues) const {
  std::sort(issues.begin(), issues.end(),
            [](const Issue& a, const Issue& b) { return a.iid < b.iid; });
  for (std::size_t i = 1; i < issues.size(); ++i) {
    if (issues[i].iid == issues[i - 1].iid) {
      throw Error(ErrorCode::DuplicateId, "duplicate issue iid " + std::to_string(issues[i].iid));
    }
  }
  write_file_atomic(root_ / "issues.jsonl", to_jsonl(issues));
}

std::optional<Issue> Workspace::find_issue(std::int64_t iid) const {
  for (auto& issue : load_issues()) {
    if (issue.iid == iid) return issue;
  }
  return std::nullopt;
}

std::vector<Review> Workspace::load_reviews() const {
  std::vector<Review> reviews;
  for_each_jsonl(root_ / "reviews.jsonl", [&](const json& j, std::size_t) {
    Review review = j.get<Review>();
    validate(review);
    reviews.push_back(std::move(review));
  });
  std::sort(reviews.begin(), reviews.end(),
            [](const Review& a, const Review& b) { return a.id < b.id; });
  return reviews;
}

void Workspace::save_reviews(std::vector<Review> reviews) const {
  std::sort(reviews.begin(), reviews.end(),
            [](const Review& a, const Review& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < reviews.size(); ++i) {
    if (reviews[i].id == reviews[i - 1].id) {
      throw Error(ErrorCode::DuplicateId, "duplicate review id " + reviews[i].id);
    }
  }
  write_file_atomic(root_ / "reviews.jsonl", to_jsonl(reviews));
}

LinkLog Workspace::load_links() const {
  LinkLog log;
  for_each_jsonl(root_ / "links.jsonl", [&](const json& j, std::size_t) {
    const std::string type = j.value("type", std::string("gold"));
    if (type == "gold") {
      GoldLink link = j.get<GoldLink>();
      auto it = std::find_if(log.gold.begin(), log.gold.end(),
                             [&](const GoldLink& g) { return g.review_id == link.review_id; });
      if (it != log.gold.end()) {
        *it = std::move(link);
      } else {
        log.gold.push_back(std::move(link));
      }
    } else if (type == "triage") {
      log.triage.push_back(j.get<TriageDecision>());
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown link record type " + type);
    }
  });
  return log;
}

void Workspace::save_links(const LinkLog& log) const {
  std::vector<GoldLink> gold = log.gold;
  std::sort(gold.begin(), gold.end(),
            [](const GoldLink& a, const GoldLink& b) { return a.review_id < b.review_id; });
  write_file_atomic(root_ / "links.jsonl", to_jsonl(gold) + to_jsonl(log.triage));
}

void Workspace::append_links(std::span<const GoldLink> gold,
                             std::span<const TriageDecision> triage) const {
  std::string out;
  for (const auto& t : triage) out += json(t).dump() + "\n";
  for (const auto& g : gold) out += json(g).dump() + "\n";
  append_file(root_ / "links.jsonl", out);
}

fs::path Workspace::embeddings_file(std::string_view provider_id) const {
  return root_ / "embeddings" / (encode_provider_file(provider_id) + ".jsonl");
}

std::vector<StoredEmbedding> Workspace::load_embeddings(std::string_view provider_id) const {
  std::vector<StoredEmbedding> records;
  const std::string id(provider_id);
  for_each_jsonl(embeddings_file(provider_id), [&](const json& j, std::size_t) {
    records.push_back(stored_embedding_from_json(j, id));
  });
  return records;
}

void Workspace::save_embeddings(std::string_view provider_id,
                                std::vector<StoredEmbedding> records) const {
  auto key = [](const StoredEmbedding& e) {
    // Issues by numeric iid, then reviews by id.
    const bool issue = e.kind == EmbeddingKind::Issue;
    return std::make_tuple(issue ? 0 : 1, issue ? e.record_id.size() : 0, e.record_id);
  };
  std::sort(records.begin(), records.end(),
            [&](const StoredEmbedding& a, const StoredEmbedding& b) { return key(a) < key(b); });
  fs::create_directories(root_ / "embeddings");
  write_file_atomic(embeddings_file(provider_id), to_jsonl(records));
}

std::vector<std::string> Workspace::embedding_providers() const {
  std::vector<std::string> ids;
  const fs::path dir = root_ / "embeddings";
  if (!fs::exists(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".jsonl")) {
      ids.push_back(decode_provider_file(name.substr(0, name.size() - 6)));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------

std::optional<std::string> HttpReply::header(std::string_view name) const {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto it = headers.find(key);
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

HttplibTransport::HttplibTransport(std::string origin) : origin_(std::move(origin)) {}

HttpReply HttplibTransport::get(const std::string& path_and_query,
                                const std::map<std::string, std::string>& headers) {
  httplib::Client client(origin_);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  httplib::Headers h(headers.begin(), headers.end());
  auto res = client.Get(path_and_query, h);
  if (!res) {
    throw Error(ErrorCode::NetworkFailure,
                "GET " + origin_ + path_and_query + ": " + httplib::to_string(res.error()));
  }
  HttpReply reply{res->status, {}, res->body};
  for (const auto& [k, v] : res->headers) {
    std::string key = k;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    reply.headers[key] = v;
  }
  return reply;
}

ProjectRef parse_project_ref(std::string_view ref, std::string_view default_origin) {
  ref = trim(ref);
  if (ref.empty()) throw Error(ErrorCode::InvalidArgument, "empty project reference");
  ProjectRef out{std::string(default_origin), {}};
  std::string_view path = ref;
  if (ref.starts_with("http://") || ref.starts_with("https://")) {
    const auto host_begin = ref.find("://") + 3;
    const auto path_begin = ref.find('/', host_begin);
    if (path_begin == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "project URL has no path: " + std::string(ref));
    }
    out.origin = std::string(ref.substr(0, path_begin));
    path = ref.substr(path_begin + 1);
  }
  if (auto dash = path.find("/-/"); dash != std::string_view::npos) path = path.substr(0, dash);
  while (path.ends_with('/')) path.remove_suffix(1);
  if (path.ends_with(".git")) path.remove_suffix(4);
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, "empty project path");
  out.project_id = url_encode(path);
  return out;
}

std::string issues_page_path(const ProjectRef& project, int page) {
  return "/api/v4/projects/" + project.project_id + "/issues?per_page=100&page=" +
         std::to_string(page);
}

Issue issue_from_tracker_json(const std::string& json_object) {
  const json j = json::parse(json_object);
  Issue issue;
  issue.iid = j.at("iid").get<std::int64_t>();
  issue.title = j.at("title").get<std::string>();
  if (j.contains("description") && j["description"].is_string()) {
    issue.description = j["description"].get<std::string>();
  }
  if (j.contains("labels") && j["labels"].is_array()) {
    for (const auto& l : j["labels"]) {
      if (l.is_string()) {
        issue.labels.push_back(l.get<std::string>());
      } else if (l.is_object() && l.contains("name")) {
        issue.labels.push_back(l["name"].get<std::string>());
      }
    }
  }
  const auto state = parse_issue_state(j.value("state", std::string("opened")));
  issue.state = state.value_or(IssueState::Open);
  if (j.contains("web_url") && j["web_url"].is_string()) issue.url = j["web_url"].get<std::string>();
  if (j.contains("created_at") && j["created_at"].is_string()) {
    issue.created_at = j["created_at"].get<std::string>();
  }
  validate(issue);
  return issue;
}

namespace {

void upsert_issue_page(const Workspace& ws, std::vector<Issue> incoming) {
  std::map<std::int64_t, Issue> merged;
  for (auto& issue : ws.load_issues()) merged.emplace(issue.iid, std::move(issue));
  for (auto& issue : incoming) {
    auto it = merged.find(issue.iid);
    if (it != merged.end() && !issue.title_translated && it->second.title == issue.title) {
      issue.title_translated = it->second.title_translated;
    }
    merged.insert_or_assign(issue.iid, std::move(issue));
  }
  std::vector<Issue> all;
  all.reserve(merged.size());
  for (auto& [_, issue] : merged) all.push_back(std::move(issue));
  ws.save_issues(std::move(all));
}

}  // namespace

CollectReport collect_issues(Workspace& ws, HttpTransport& transport, std::string_view project_ref,
                             const CollectOptions& opts) {
  const ProjectRef project = parse_project_ref(project_ref);
  if (opts.translate_to && !opts.translator) {
    throw Error(ErrorCode::InvalidArgument, "translate_to requires a translator");
  }
  WorkspaceLock lock(ws.root());

  CollectReport report;
  int page = 1;
  const fs::path state_file = ws.collect_state_file();
  if (fs::exists(state_file)) {
    const json state = json::parse(read_file(state_file), nullptr, false);
    if (state.is_object() && state.value("project_ref", std::string{}) == project_ref) {
      page = std::max(1, state.value("next_page", 1));
    }
  }
  report.first_page = page;

  WorkspaceMeta meta = ws.meta();
  if (meta.project_ref != project_ref) {
    meta.project_ref = std::string(project_ref);
    ws.save_meta(meta);
  }

  std::map<std::string, std::string> headers{{"Accept", "application/json"}};
  if (opts.auth_token) headers["PRIVATE-TOKEN"] = *opts.auth_token;
  auto sleep = opts.sleep ? opts.sleep : [](std::chrono::seconds s) { std::this_thread::sleep_for(s); };

  while (true) {
    const std::string path = issues_page_path(project, page);
    HttpReply reply;
    for (int attempt = 0;; ++attempt) {
      reply = transport.get(path, headers);
      if (reply.status != 429) break;
      if (attempt >= opts.max_rate_limit_retries) {
        throw Error(ErrorCode::RateLimited, "rate limited on page " + std::to_string(page));
      }
      int wait = 1;
      if (auto ra = reply.header("retry-after")) {
        try {
          wait = std::max(0, std::stoi(*ra));
        } catch (const std::exception&) {
          wait = 1;
        }
      }
      sleep(std::chrono::seconds(wait));
    }
    if (reply.status == 401 || reply.status == 403) {
      throw Error(ErrorCode::AuthFailure,
                  "tracker refused access (HTTP " + std::to_string(reply.status) + ")");
    }
    if (reply.status < 200 || reply.status >= 300) {
      throw Error(ErrorCode::NetworkFailure, "GET " + path + " returned HTTP " +
                                                 std::to_string(reply.status));
    }

    const json body = json::parse(reply.body, nullptr, false);
    if (!body.is_array()) {
      throw Error(ErrorCode::NetworkFailure, "page " + std::to_string(page) + " is not a JSON array");
    }
    std::vector<Issue> issues;
    issues.reserve(body.size());
    for (const auto& item : body) {
      Issue issue = issue_from_tracker_json(item.dump());
      if (opts.translate_to) {
        issue.title_translated = opts.translator->translate(issue.title, "auto", *opts.translate_to);
      }
      issues.push_back(std::move(issue));
    }
    report.fetched += issues.size();
    ++report.pages;
    upsert_issue_page(ws, std::move(issues));

    const std::string next = std::string(trim(reply.header("x-next-page").value_or("")));
    if (next.empty()) {
      std::error_code ec;
      fs::remove(state_file, ec);
      break;
    }
    try {
      page = std::stoi(next);
    } catch (const std::exception&) {
      throw Error(ErrorCode::NetworkFailure, "bad X-Next-Page header: " + next);
    }
    write_file_atomic(state_file,
                      json{{"project_ref", project_ref}, {"next_page", page}}.dump() + "\n");
  }
  report.stored = ws.load_issues().size();
  return report;
}

// ---------------------------------------------------------------------------

ImportFormat import_format_for(const fs::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".ndjson" || ext == ".json" ? ImportFormat::Jsonl
                                                                : ImportFormat::Csv;
}

namespace {

struct CsvRecord {
  std::size_t line;
  std::vector<std::string> fields;
};

// RFC 4180 with LF or CRLF line ends; quoted fields may span lines.
std::vector<CsvRecord> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    CsvRecord rec{line, {}};
    std::string field;
    bool done = false;
    while (!done) {
      if (i < text.size() && text[i] == '"') {
        ++i;
        while (true) {
          if (i >= text.size()) throw ParseError(rec.line, "unterminated quoted field");
          if (text[i] == '"') {
            if (i + 1 < text.size() && text[i + 1] == '"') {
              field += '"';
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (text[i] == '\n') ++line;
          field += text[i++];
        }
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw ParseError(line, "unexpected character after closing quote");
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') throw ParseError(line, "quote inside unquoted field");
          field += text[i++];
        }
      }
      rec.fields.push_back(std::move(field));
      field.clear();
      if (i >= text.size()) {
        done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < text.size() && text[i] == '\n') ++i;
        ++line;
        done = true;
      }
    }
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) records.push_back(std::move(rec));
  }
  return records;
}

struct ImportRow {
  std::size_t line;
  std::optional<std::string> id;
  std::string text;
  std::optional<std::string> lang;
  std::optional<std::int64_t> issue_iid;
};

std::vector<ImportRow> read_csv_rows(const std::string& content) {
  const auto records = parse_csv(content);
  std::vector<ImportRow> rows;
  if (records.empty()) return rows;
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < records[0].fields.size(); ++c) {
    col[std::string(trim(records[0].fields[c]))] = c;
  }
  if (!col.contains("text")) throw ParseError(records[0].line, "header has no 'text' column");
  const std::size_t width = records[0].fields.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != width) {
      throw ParseError(rec.line, "expected " + std::to_string(width) + " fields, got " +
                                     std::to_string(rec.fields.size()));
    }
    ImportRow row{rec.line, {}, rec.fields[col["text"]], {}, {}};
    if (col.contains("id") && !trim(rec.fields[col["id"]]).empty()) {
      row.id = std::string(trim(rec.fields[col["id"]]));
    }
    if (col.contains("lang") && !trim(rec.fields[col["lang"]]).empty()) {
      row.lang = std::string(trim(rec.fields[col["lang"]]));
    }
    if (col.contains("issue_iid") && !trim(rec.fields[col["issue_iid"]]).empty()) {
      row.issue_iid = parse_iid(rec.fields[col["issue_iid"]], rec.line);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ImportRow> read_jsonl_rows(const std::string& content) {
  std::vector<ImportRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (!j.is_object()) throw ParseError(line_no, "not a JSON object");
    if (!j.contains("text") || !j["text"].is_string()) {
      throw ParseError(line_no, "missing string field 'text'");
    }
    ImportRow row{line_no, {}, j["text"].get<std::string>(), {}, {}};
    if (j.contains("id") && !j["id"].is_null()) {
      if (!j["id"].is_string()) throw ParseError(line_no, "'id' must be a string");
      row.id = j["id"].get<std::string>();
    }
    if (j.contains("lang") && j["lang"].is_string()) row.lang = j["lang"].get<std::string>();
    if (j.contains("issue_iid") && !j["issue_iid"].is_null()) {
      if (j["issue_iid"].is_number_integer()) {
        row.issue_iid = j["issue_iid"].get<std::int64_t>();
        if (*row.issue_iid <= 0) throw ParseError(line_no, "issue_iid must be positive");
      } else if (j["issue_iid"].is_string()) {
        if (!trim(j["issue_iid"].get<std::string>()).empty()) {
          row.issue_iid = parse_iid(j["issue_iid"].get<std::string>(), line_no);
        }
      } else {
        throw ParseError(line_no, "issue_iid must be an integer");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::size_t import_issues(Workspace& ws, const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Storage, "cannot read " + path.string());
  std::vector<Issue> incoming;
  std::map<std::int64_t, std::size_t> seen;  // iid -> line
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    Issue issue = j.get<Issue>();
    validate(issue);
    if (!seen.emplace(issue.iid, line).second) {
      throw ParseError(line, "duplicate issue iid " + std::to_string(issue.iid));
    }
    incoming.push_back(std::move(issue));
  });

  WorkspaceLock lock(ws.root());
  std::map<std::int64_t, Issue> merged;
  for (auto& i : ws.load_issues()) merged.emplace(i.iid, std::move(i));
  for (auto& i : incoming) merged.insert_or_assign(i.iid, std::move(i));
  std::vector<Issue> out;
  for (auto& [iid, i] : merged) out.push_back(std::move(i));
  ws.save_issues(std::move(out));
  return incoming.size();
}

ImportReport import_reviews(Workspace& ws, const fs::path& path, ImportFormat format,
                            std::string_view lang) {
  if (!is_valid_language_tag(lang)) {
    throw Error(ErrorCode::UnsupportedLanguage, "invalid language tag: " + std::string(lang));
  }
  const std::string content = read_file(path);
  std::vector<ImportRow> rows =
      format == ImportFormat::Csv ? read_csv_rows(content) : read_jsonl_rows(content);

  std::vector<Review> incoming;
  std::vector<GoldLink> links;
  std::set<std::string> seen;
  const std::string now = now_utc_iso();
  for (const ImportRow& row : rows) {
    if (trim(row.text).empty()) throw ParseError(row.line, "empty review text");
    if (row.lang && !is_valid_language_tag(*row.lang)) {
      throw ParseError(row.line, "invalid language tag " + *row.lang);
    }
    Review r;
    r.id = row.id ? *row.id : content_hash(row.text);
    r.original_text = row.text;
    r.original_lang = row.lang ? *row.lang : std::string(lang);
    r.source = "import:" + path.filename().string();
    r.created_at = now;
    if (!seen.insert(r.id).second) {
      throw Error(ErrorCode::DuplicateId,
                  "duplicate review id '" + r.id + "' on line " + std::to_string(row.line));
    }
    if (row.issue_iid) links.push_back({r.id, *row.issue_iid, LinkOrigin::Imported, now});
    incoming.push_back(std::move(r));
  }

  WorkspaceLock lock(ws.root());
  std::vector<Review> reviews = ws.load_reviews();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < reviews.size(); ++i) index[reviews[i].id] = i;

  ImportReport report;
  for (auto& r : incoming) {
    auto it = index.find(r.id);
    if (it != index.end()) {
      if (reviews[it->second].original_text != r.original_text) {
        throw Error(ErrorCode::DuplicateId,
                    "review id '" + r.id + "' already stored with different text");
      }
      continue;
    }
    ++report.added;
    reviews.push_back(std::move(r));
  }
  report.reviews = incoming.size();
  report.gold_links = links.size();

  LinkLog log = ws.load_links();
  bool links_changed = false;
  for (auto& link : links) {
    auto existing = std::find_if(log.gold.begin(), log.gold.end(),
                                 [&](const GoldLink& g) { return g.review_id == link.review_id; });
    if (existing == log.gold.end()) {
      log.gold.push_back(std::move(link));
      links_changed = true;
    } else if (existing->issue_iid != link.issue_iid) {
      *existing = std::move(link);
      links_changed = true;
    }
  }
  if (report.added > 0) ws.save_reviews(std::move(reviews));
  if (links_changed) ws.save_links(log);
  return report;
}

// ---------------------------------------------------------------------------

UpsertReport upsert_embeddings(Workspace& ws, const EmbeddingProvider& provider,
                               EmbeddingKind kind) {
  WorkspaceLock lock(ws.root());
  const std::string provider_id = provider.provider_id();

  std::vector<std::pair<std::string, std::string>> items;  // (record id, text)
  if (kind == EmbeddingKind::Issue) {
    for (const auto& issue : ws.load_issues()) {
      items.emplace_back(std::to_string(issue.iid), issue.embed_text());
    }
  } else {
    for (const auto& review : ws.load_reviews()) items.emplace_back(review.id, review.embed_text());
  }

  std::vector<StoredEmbedding> kept;
  std::map<std::string, StoredEmbedding> existing;
  for (auto& e : ws.load_embeddings(provider_id)) {
    if (e.kind == kind) {
      existing.emplace(e.record_id, std::move(e));
    } else {
      kept.push_back(std::move(e));
    }
  }

  UpsertReport report;
  for (const auto& [id, text] : items) {
    const std::string hash = content_hash(text);
    auto it = existing.find(id);
    if (it != existing.end() && it->second.text_hash == hash &&
        it->second.vector.dim() == provider.dim()) {
      kept.push_back(std::move(it->second));
      ++report.skipped;
      continue;
    }
    try {
      EmbeddingVector v = provider.embed(text);
      if (v.dim() != provider.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    provider_id + " produced dim " + std::to_string(v.dim()) + ", declared " +
                        std::to_string(provider.dim()));
      }
      kept.push_back({kind, id, hash, v.with_provider(provider_id)});
      ++report.embedded;
    } catch (const Error& e) {
      report.failures.emplace_back(id, e.what());
    }
  }
  ws.save_embeddings(provider_id, std::move(kept));
  return report;
}

bool add_review(Workspace& ws, Review review) {
  validate(review);
  WorkspaceLock lock(ws.root());
  auto reviews = ws.load_reviews();
  for (const auto& r : reviews) {
    if (r.id != review.id) continue;
    if (r.original_text != review.original_text) {
      throw Error(ErrorCode::DuplicateId, "review id '" + review.id + "' holds a different text");
    }
    return false;
  }
  reviews.push_back(std::move(review));
  ws.save_reviews(std::move(reviews));
  return true;
}

TriageDecision record_triage(Workspace& ws, TriageDecision decision) {
  WorkspaceLock lock(ws.root());
  const auto reviews = ws.load_reviews();
  if (std::none_of(reviews.begin(), reviews.end(),
                   [&](const Review& r) { return r.id == decision.review_id; })) {
    throw Error(ErrorCode::UnknownReview, "unknown review: " + decision.review_id);
  }
  if (decision.kind == TriageKind::Linked) {
    if (!decision.issue_iid) {
      throw Error(ErrorCode::InvalidArgument, "a linked decision needs an issue iid");
    }
    if (!ws.find_issue(*decision.issue_iid)) {
      throw Error(ErrorCode::UnknownIssue, "unknown issue: " + std::to_string(*decision.issue_iid));
    }
  } else if (decision.issue_iid) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(decision.kind)) + " decisions take no issue iid");
  }
  if (decision.decided_at.empty()) decision.decided_at = now_utc_iso();

  std::vector<GoldLink> gold;
  if (decision.kind == TriageKind::Linked && !ws.load_links().gold_for(decision.review_id)) {
    gold.push_back({decision.review_id, *decision.issue_iid, LinkOrigin::Triage,
                    decision.decided_at});
  }
  ws.append_links(gold, std::span<const TriageDecision>(&decision, 1));
  return decision;
}

CorpusStats corpus_stats(const Workspace& ws) {
  CorpusStats stats;
  stats.issues = ws.load_issues().size();
  stats.reviews = ws.load_reviews().size();
  const LinkLog log = ws.load_links();
  stats.gold_links = log.gold.size();
  stats.triage_decisions = log.triage.size();
  for (const auto& provider : ws.embedding_providers()) {
    stats.embeddings[provider] = ws.load_embeddings(provider).size();
  }
  return stats;
}

}  // namespace crowdmatch
