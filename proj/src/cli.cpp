#include "crowdmatch/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "crowdmatch/app.hpp"
#include "crowdmatch/evaluation.hpp"
#include "crowdmatch/json_io.hpp"
#include "crowdmatch/service.hpp"

namespace crowdmatch {

using nlohmann::json;

namespace {

struct Options {
  std::string workspace;
  std::string provider = "ref-384";
  std::size_t top_k = kDefaultTopK;
  std::optional<double> threshold;
  std::optional<std::string> translate_to;
  std::vector<std::string> filter_class;
  std::string format = "table";
  std::string lang = "auto";

  // subcommand arguments
  std::string project_ref;
  std::string base_url;
  std::string token;
  std::string file;
  std::string import_lang = "en";
  std::string kind;
  std::optional<std::string> text;
  std::vector<std::string> providers;
  bool no_classify = false;
  std::string host = "127.0.0.1";
  int port = 8080;
};

class Output {
 public:
  Output(std::ostream& out, std::ostream& err, bool json_mode)
      : out_(out), err_(err), json_(json_mode) {
    color_ = !json_mode && std::getenv("NO_COLOR") == nullptr && &out == &std::cout &&
             ::isatty(STDOUT_FILENO);
  }

  bool json_mode() const { return json_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  void emit(const json& j, const std::string& table) {
    if (json_) {
      out_ << render_json(j) << '\n';
    } else {
      out_ << table;
    }
    out_.flush();
  }

  std::string bold(const std::string& s) const { return color_ ? "\x1b[1m" + s + "\x1b[0m" : s; }

  int fail(std::string_view code, std::string_view message, int exit_code) {
    err_ << "error: " << message << '\n';
    if (json_) out_ << render_json(error_json(code, message)) << '\n';
    return exit_code;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  bool json_;
  bool color_ = false;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

MatchOptions match_options(const Options& o) {
  MatchOptions m;
  m.provider = o.provider;
  m.k = o.top_k;
  m.threshold = o.threshold;
  m.translate_to = o.translate_to;
  m.source_lang = o.lang;
  if (!o.filter_class.empty()) {
    std::set<ReviewClass> classes;
    for (const auto& name : o.filter_class) {
      const auto c = parse_review_class(name);
      if (!c) throw Error(ErrorCode::InvalidArgument, "unknown review class: " + name);
      classes.insert(*c);
    }
    m.classify_filter = std::move(classes);
  }
  return m;
}

EvalOptions eval_options(const Options& o) {
  const MatchOptions m = match_options(o);
  validate(m);
  EvalOptions e;
  e.k = m.k;
  e.threshold = m.threshold;
  e.translate_to = m.translate_to;
  e.classify_filter = m.classify_filter;
  return e;
}

std::string match_table(const MatchResult& r, const std::map<std::int64_t, Issue>& issues,
                        const Output& o) {
  std::ostringstream s;
  s << "review: " << r.query_text << '\n';
  if (r.translated_text) s << "translation: " << *r.translated_text << '\n';
  if (r.label) s << "class: " << to_string(*r.label) << '\n';
  if (r.filtered_out) {
    s << "filtered out by the class filter; no candidates\n\n";
    return s.str();
  }
  if (r.candidates.empty()) {
    s << "no candidates" << (r.threshold_applied ? " above the threshold" : "") << "\n\n";
    return s.str();
  }
  s << o.bold(fmt("%4s %8s %11s  %s", "rank", "iid", "similarity", "title")) << '\n';
  for (const auto& c : r.candidates) {
    const auto it = issues.find(c.issue_iid);
    const std::string title = it != issues.end() ? it->second.title : "?";
    const std::string pct = format_percent(c.similarity);
    s << fmt("%4d %8lld %11s  ", c.rank, static_cast<long long>(c.issue_iid), pct.c_str())
      << title << '\n';
  }
  s << '\n';
  return s.str();
}

Workspace open_or_create(const std::string& root) {
  if (std::filesystem::exists(std::filesystem::path(root) / "meta.json")) {
    return Workspace::open(root);
  }
  return Workspace::create(root);
}

int cmd_collect(const Options& o, Output& out) {
  Workspace ws = open_or_create(o.workspace);
  const ProjectRef ref = parse_project_ref(o.project_ref);
  HttplibTransport transport(o.base_url.empty() ? ref.origin : o.base_url);
  std::shared_ptr<AppContext> ctx;
  CollectOptions opts;
  if (!o.token.empty()) opts.auth_token = o.token;
  if (o.translate_to) {
    ctx = AppContext::open(o.workspace);
    opts.translate_to = o.translate_to;
    opts.translator = ctx->translator();
  }
  const CollectReport r = collect_issues(ws, transport, o.project_ref, opts);
  out.emit({{"fetched", r.fetched}, {"stored", r.stored}, {"pages", r.pages}, {"first_page", r.first_page}},
           fmt("fetched %zu issues over %d page(s) starting at page %d; %zu stored\n", r.fetched,
               r.pages, r.first_page, r.stored));
  return 0;
}

int cmd_import_issues(const Options& o, Output& out) {
  Workspace ws = open_or_create(o.workspace);
  const std::size_t n = import_issues(ws, o.file);
  const std::size_t stored = ws.load_issues().size();
  out.emit({{"issues_read", n}, {"stored", stored}},
           fmt("read %zu issues; %zu stored\n", n, stored));
  return 0;
}

int cmd_import_reviews(const Options& o, Output& out) {
  Workspace ws = open_or_create(o.workspace);
  const ImportReport r = import_reviews(ws, o.file, import_format_for(o.file), o.import_lang);
  out.emit({{"reviews", r.reviews}, {"gold_links", r.gold_links}, {"added", r.added}},
           fmt("imported %zu reviews (%zu new), %zu gold links\n", r.reviews, r.added,
               r.gold_links));
  return 0;
}

int cmd_enrich(const Options& o, Output& out) {
  auto ctx = AppContext::open(o.workspace);
  Workspace ws = ctx->workspace();
  EnrichOptions eo;
  eo.target = o.translate_to;
  eo.classify = !o.no_classify;

  json failures = json::array();
  std::size_t translated = 0, classified = 0, issues_translated = 0;
  std::vector<Review> reviews = ws.load_reviews();
  for (auto& r : reviews) {
    try {
      r = ctx->enricher().enrich(r, eo);
      translated += r.translated_text.has_value() && eo.target;
      classified += r.label.has_value() && eo.classify;
    } catch (const Error& e) {
      failures.push_back({{"kind", "review"}, {"id", r.id}, {"error", error_code_name(e.code())},
                          {"message", e.what()}});
    }
  }
  std::vector<Issue> issues = ws.load_issues();
  if (o.translate_to) {
    for (auto& i : issues) {
      try {
        i.title_translated = ctx->translator()->translate(i.title, "auto", *o.translate_to);
        ++issues_translated;
      } catch (const Error& e) {
        failures.push_back({{"kind", "issue"}, {"id", std::to_string(i.iid)},
                            {"error", error_code_name(e.code())}, {"message", e.what()}});
      }
    }
  }
  {
    WorkspaceLock lock(ws.root());
    ws.save_reviews(reviews);
    if (o.translate_to) ws.save_issues(issues);
  }
  std::string table = fmt("reviews: %zu (translated %zu, classified %zu)\n", reviews.size(),
                          translated, classified);
  if (o.translate_to) table += fmt("issue titles translated: %zu\n", issues_translated);
  for (const auto& f : failures) {
    table += "failed " + f["kind"].get<std::string>() + " " + f["id"].get<std::string>() + ": " +
             f["message"].get<std::string>() + '\n';
  }
  out.emit({{"reviews", reviews.size()}, {"translated", translated}, {"classified", classified},
            {"issues_translated", issues_translated}, {"failures", failures}},
           table);
  return failures.empty() ? 0 : 2;
}

int cmd_embed(const Options& o, Output& out) {
  EmbeddingKind kind;
  if (o.kind == "issues") {
    kind = EmbeddingKind::Issue;
  } else if (o.kind == "reviews") {
    kind = EmbeddingKind::Review;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--kind must be issues or reviews");
  }
  auto ctx = AppContext::open(o.workspace);
  Workspace ws = ctx->workspace();
  const UpsertReport r = upsert_embeddings(ws, *ctx->registry().get_provider(o.provider), kind);
  json failures = json::array();
  std::string table = fmt("%s: embedded %zu, up to date %zu, failed %zu\n", o.provider.c_str(),
                          r.embedded, r.skipped, r.failures.size());
  for (const auto& [id, message] : r.failures) {
    failures.push_back({{"id", id}, {"message", message}});
    table += "failed " + id + ": " + message + '\n';
  }
  out.emit({{"provider_id", o.provider}, {"kind", o.kind}, {"embedded", r.embedded},
            {"skipped", r.skipped}, {"failures", failures}},
           table);
  return r.failures.empty() ? 0 : 2;
}

int cmd_match(const Options& o, Output& out, std::istream& in) {
  const MatchOptions mo = match_options(o);
  validate(mo);
  auto ctx = AppContext::open(o.workspace);
  auto run = [&](const std::string& text) {
    const MatchResult r = ctx->matcher().match_review(text, mo);
    if (out.json_mode() && !o.text) {
      out.out() << match_result_json(r, *ctx->issues()).dump() << '\n';  // one line per review
      out.out().flush();
    } else {
      out.emit(match_result_json(r, *ctx->issues()), match_table(r, *ctx->issues(), out));
    }
  };
  if (o.text) {
    run(*o.text);
    return 0;
  }
  const bool prompt = !out.json_mode() && &in == &std::cin && ::isatty(STDIN_FILENO);
  std::string line;
  while (true) {
    if (prompt) out.out() << "> " << std::flush;
    if (!std::getline(in, line) || trim(line).empty()) break;
    run(line);
  }
  return 0;
}

int cmd_eval(const Options& o, Output& out) {
  auto ctx = AppContext::open(o.workspace);
  const EvalReport r = run_experiment(ctx->matcher(), o.provider, eval_options(o));
  const json j = r;
  save_last_eval(ctx->workspace(), j);
  out.emit(j, format_table(r));
  return 0;
}

int cmd_compare(const Options& o, Output& out) {
  auto ctx = AppContext::open(o.workspace);
  const ComparisonReport r = compare_providers(ctx->matcher(), o.providers, eval_options(o));
  out.emit(r, format_table(r));
  return 0;
}

int cmd_stats(const Options& o, Output& out) {
  ApiService service(AppContext::open(o.workspace));
  const ApiResponse r = service.stats();
  if (r.status != 200) {
    return out.fail(r.body["error"]["code"].get<std::string>(),
                    r.body["error"]["message"].get<std::string>(), 2);
  }
  const json& s = r.body;
  std::string table = fmt("issues             %zu\nreviews            %zu\ngold links         %zu\n"
                          "triage decisions   %zu\n",
                          s["issues"].get<std::size_t>(), s["reviews"].get<std::size_t>(),
                          s["gold_links"].get<std::size_t>(), s["triage_decisions"].get<std::size_t>());
  for (const auto& [provider, n] : s["embeddings"].items()) {
    table += fmt("embeddings         %zu  %s\n", n.get<std::size_t>(), provider.c_str());
  }
  out.emit(s, table);
  return 0;
}

int cmd_serve(const Options& o, Output& out) {
  auto ctx = AppContext::open(o.workspace);
  auto service = std::make_shared<ApiService>(ctx);
  ApiServer server(service, ctx->config().cors_origin);
  const int port = server.bind(o.host, o.port);
  out.err() << "serving " << o.workspace << " on http://" << o.host << ':' << port << '\n';
  server.run();
  return 0;
}

// --format json must shape even usage errors, which arrive before parsing.
bool wants_json(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--format=json") return true;
    if (args[i] == "--format" && i + 1 < args.size() && args[i + 1] == "json") return true;
  }
  return false;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in) {
  Options o;
  CLI::App app{"crowdmatch: suggest tracker issues for user reviews", "crowdmatch"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("-w,--workspace", o.workspace, "Workspace directory")
      ->envname("CROWDMATCH_WORKSPACE");
  auto* provider_opt = app.add_option("--provider", o.provider,
                                      "Embedding provider id (default: config, then ref-384)")
                           ->capture_default_str();
  app.add_option("--top-k", o.top_k, "Candidates per review (>= 1)")->capture_default_str();
  app.add_option("--threshold", o.threshold, "Minimum cosine similarity in [-1, 1]");
  app.add_option("--translate-to", o.translate_to, "Translate reviews to this language first");
  app.add_option("--filter-class", o.filter_class, "Only match reviews of this class (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->delimiter(',');
  app.add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();

  auto* collect = app.add_subcommand("collect-issues", "Fetch all issues of a tracker project");
  collect->add_option("project_ref", o.project_ref, "URL, group/project path or numeric id")
      ->required();
  collect->add_option("--base-url", o.base_url, "Tracker origin (default from the reference)");
  collect->add_option("--token", o.token, "Access token")->envname("CROWDMATCH_TRACKER_TOKEN");

  auto* import_i = app.add_subcommand("import-issues", "Load issues from a JSONL file");
  import_i->add_option("file", o.file)->required();

  auto* import_r = app.add_subcommand("import-reviews", "Load reviews (CSV or JSONL)");
  import_r->add_option("file", o.file)->required();
  import_r->add_option("--lang", o.import_lang, "Language of rows without one")
      ->capture_default_str();

  auto* enrich = app.add_subcommand("enrich", "Translate and classify stored reviews");
  enrich->add_flag("--no-classify", o.no_classify);

  auto* embed = app.add_subcommand("embed", "Store vectors for issues or reviews");
  embed->add_option("--kind", o.kind, "issues or reviews")
      ->required()
      ->check(CLI::IsMember({"issues", "reviews"}));

  auto* match = app.add_subcommand("match", "Rank issues for a review (stdin loop without --text)");
  match->add_option("--text", o.text, "Review text");
  match->add_option("--lang", o.lang, "Language of the review text")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Hit rate over the gold-linked reviews");
  auto* compare = app.add_subcommand("compare", "Evaluate several providers side by side");
  compare->add_option("--providers", o.providers, "Comma-separated provider ids")
      ->required()
      ->delimiter(',');
  auto* stats = app.add_subcommand("stats", "Corpus counts");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", o.port)->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--host", o.host)->capture_default_str();

  Output output(out, err, wants_json(args));
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return output.fail("usage", e.what(), 1);
  }

  try {
    if (o.workspace.empty()) {
      throw Error(ErrorCode::InvalidArgument, "no workspace: pass --workspace or set CROWDMATCH_WORKSPACE");
    }
    const auto root = std::filesystem::path(o.workspace);
    if (provider_opt->count() == 0 && std::filesystem::exists(root / "meta.json")) {
      if (auto d = load_app_config(Workspace::open(root)).default_provider) o.provider = *d;
    }
    if (*collect) return cmd_collect(o, output);
    if (*import_i) return cmd_import_issues(o, output);
    if (*import_r) return cmd_import_reviews(o, output);
    if (*enrich) return cmd_enrich(o, output);
    if (*embed) return cmd_embed(o, output);
    if (*match) return cmd_match(o, output, in);
    if (*eval) return cmd_eval(o, output);
    if (*compare) return cmd_compare(o, output);
    if (*stats) return cmd_stats(o, output);
    if (*serve) return cmd_serve(o, output);
  } catch (const Error& e) {
    return output.fail(e.code() == ErrorCode::InvalidArgument ? "usage" : error_code_name(e.code()),
                       e.what(), exit_code_for(e.code()));
  } catch (const std::exception& e) {
    return output.fail("internal_error", e.what(), 2);
  }
  return 1;
}

}  // namespace crowdmatch
