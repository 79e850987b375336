#include "crowdmatch/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

namespace crowdmatch {

namespace {

// 1-based position of the gold issue within the first k candidates.
std::optional<std::size_t> gold_position(const MatchResult& r, std::int64_t iid, std::size_t k) {
  const std::size_t n = std::min(k, r.candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (r.candidates[i].issue_iid == iid) return i + 1;
  }
  return std::nullopt;
}

const MatchResult& result_for(const ResultMap& results, const GoldLink& g) {
  auto it = results.find(g.review_id);
  if (it == results.end()) {
    throw Error(ErrorCode::MissingResult, "no match result for review " + g.review_id);
  }
  return it->second;
}

void require_gold(const std::vector<GoldLink>& gold, std::size_t k) {
  if (gold.empty()) throw Error(ErrorCode::EmptyGoldSet, "gold set is empty");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
}

bool is_embedding_failure(ErrorCode c) {
  return c == ErrorCode::BackendUnavailable || c == ErrorCode::DimensionMismatch ||
         c == ErrorCode::ZeroVector;
}

std::string pct(double x) { return format_percent(x); }

std::string fixed3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

std::string signed_pct(double delta) {
  const bool negative = delta < 0 && similarity_percent(-delta) > 0;
  return (negative ? "-" : "+") + format_percent(std::abs(delta));
}

}  // namespace

HitStats hit_at_k(const std::vector<GoldLink>& gold, const ResultMap& results, std::size_t k) {
  require_gold(gold, k);
  HitStats s;
  for (const auto& g : gold) {
    if (gold_position(result_for(results, g), g.issue_iid, k)) ++s.n_hits;
  }
  s.hit_rate = static_cast<double>(s.n_hits) / static_cast<double>(gold.size());
  return s;
}

RankStats rank_stats(const std::vector<GoldLink>& gold, const ResultMap& results, std::size_t k) {
  require_gold(gold, k);
  RankStats s;
  double sim_sum = 0;
  double rr_sum = 0;
  std::size_t hits = 0;
  for (const auto& g : gold) {
    const auto& r = result_for(results, g);
    if (auto pos = gold_position(r, g.issue_iid, k)) {
      ++s.histogram[static_cast<int>(*pos)];
      sim_sum += r.candidates[*pos - 1].similarity;
      rr_sum += 1.0 / static_cast<double>(*pos);
      ++hits;
    }
  }
  if (hits > 0) s.mean_similarity_of_correct = sim_sum / static_cast<double>(hits);
  s.mrr = rr_sum / static_cast<double>(gold.size());
  return s;
}

void check_consistency(const EvalReport& r) {
  std::size_t hits = 0;
  std::map<int, std::size_t> hist;
  for (const auto& o : r.per_review) {
    if (o.rank_found) {
      ++hits;
      ++hist[*o.rank_found];
    }
  }
  const bool ok = hits == r.n_hits && r.per_review.size() == r.n_gold &&
                  hist == r.correct_rank_histogram && r.n_hits <= r.n_gold &&
                  (r.n_gold == 0 ||
                   r.hit_rate == static_cast<double>(hits) / static_cast<double>(r.n_gold)) &&
                  r.mrr <= r.hit_rate;
  if (!ok) {
    throw Error(ErrorCode::InvalidArgument,
                "evaluation report for " + r.provider_id + " is not self-consistent");
  }
}

EvalReport run_experiment(const Matcher& matcher, const std::string& provider_id,
                          const EvalOptions& opts) {
  // Surface provider and index problems once, before touching reviews.
  matcher.index(provider_id);

  const Workspace& ws = matcher.workspace();
  std::vector<GoldLink> gold = ws.load_links().gold;
  if (gold.empty()) throw Error(ErrorCode::EmptyGoldSet, "workspace has no gold links");
  std::sort(gold.begin(), gold.end(),
            [](const GoldLink& a, const GoldLink& b) { return a.review_id < b.review_id; });

  std::map<std::string, Review, std::less<>> reviews;
  for (auto& r : ws.load_reviews()) reviews.emplace(r.id, std::move(r));
  for (const auto& g : gold) {
    if (!reviews.contains(g.review_id)) {
      throw Error(ErrorCode::UnknownReview, "gold link names unknown review " + g.review_id);
    }
  }

  MatchOptions mopts;
  mopts.provider = provider_id;
  mopts.k = opts.k;
  mopts.threshold = opts.threshold;
  mopts.translate_to = opts.translate_to;
  mopts.classify_filter = opts.classify_filter;
  validate(mopts);

  struct Slot {
    std::optional<MatchResult> result;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(gold.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < gold.size(); i = next++) {
      try {
        MatchOptions o = mopts;
        o.review_id = gold[i].review_id;
        slots[i].result = matcher.match(reviews.at(gold[i].review_id), o);
      } catch (...) {
        slots[i].error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::clamp<std::size_t>(opts.workers, 1, gold.size());
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(work);
    work();
  }

  // Deterministic fold in review-id order.
  EvalReport report;
  report.provider_id = provider_id;
  report.k = opts.k;
  report.threshold = opts.threshold;
  std::vector<GoldLink> scored;
  ResultMap results;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    MatchResult result;
    if (slots[i].error) {
      try {
        std::rethrow_exception(slots[i].error);
      } catch (const Error& e) {
        const bool excluded = is_embedding_failure(e.code());
        report.failures.push_back(
            {gold[i].review_id, std::string(error_code_name(e.code())), e.what(), excluded});
        if (excluded) continue;
      }
    } else {
      result = std::move(*slots[i].result);
    }
    ReviewOutcome o{gold[i].review_id, gold[i].issue_iid, std::nullopt, std::nullopt,
                    result.filtered_out};
    if (auto pos = gold_position(result, gold[i].issue_iid, opts.k)) {
      o.rank_found = static_cast<int>(*pos);
      o.similarity = result.candidates[*pos - 1].similarity;
    }
    if (o.filtered_out) ++report.n_filtered_out;
    report.per_review.push_back(std::move(o));
    scored.push_back(gold[i]);
    results.emplace(gold[i].review_id, std::move(result));
  }

  report.n_gold = scored.size();
  if (!scored.empty()) {
    const auto hits = hit_at_k(scored, results, opts.k);
    const auto ranks = rank_stats(scored, results, opts.k);
    report.n_hits = hits.n_hits;
    report.hit_rate = hits.hit_rate;
    report.mrr = ranks.mrr;
    report.correct_rank_histogram = ranks.histogram;
    report.mean_similarity_of_correct = ranks.mean_similarity_of_correct;
  }
  check_consistency(report);
  return report;
}

ComparisonReport compare_providers(const Matcher& matcher,
                                   const std::vector<std::string>& provider_ids,
                                   const EvalOptions& opts) {
  if (provider_ids.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "compare needs at least two providers");
  }
  for (const auto& id : provider_ids) {
    if (!matcher.registry().contains(id)) {
      throw Error(ErrorCode::UnknownProvider, "unknown provider: " + id);
    }
  }
  ComparisonReport out;
  for (const auto& id : provider_ids) out.reports.push_back(run_experiment(matcher, id, opts));
  const auto& base = out.reports.front();
  for (const auto& r : out.reports) {
    out.deltas.push_back({r.provider_id, r.hit_rate - base.hit_rate, r.mrr - base.mrr});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const EvalReport& r) {
  using nlohmann::json;
  json hist = json::object();
  for (const auto& [rank, n] : r.correct_rank_histogram) hist[std::to_string(rank)] = n;
  json per = json::array();
  for (const auto& o : r.per_review) {
    per.push_back({{"review_id", o.review_id},
                   {"gold_iid", o.gold_iid},
                   {"rank_found", o.rank_found ? json(*o.rank_found) : json(nullptr)},
                   {"similarity", o.similarity ? json(*o.similarity) : json(nullptr)},
                   {"filtered_out", o.filtered_out}});
  }
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"review_id", f.review_id},
                        {"error", f.error},
                        {"message", f.message},
                        {"excluded", f.excluded}});
  }
  j = {{"provider_id", r.provider_id},
       {"k", r.k},
       {"threshold", r.threshold ? json(*r.threshold) : json(nullptr)},
       {"n_gold", r.n_gold},
       {"n_hits", r.n_hits},
       {"hit_rate", r.hit_rate},
       {"mrr", r.mrr},
       {"correct_rank_histogram", hist},
       {"mean_similarity_of_correct",
        r.mean_similarity_of_correct ? json(*r.mean_similarity_of_correct) : json(nullptr)},
       {"n_filtered_out", r.n_filtered_out},
       {"per_review", per},
       {"failures", failures}};
}

namespace {

template <typename T>
std::optional<T> opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void from_json(const nlohmann::json& j, EvalReport& r) {
  try {
    r = EvalReport{};
    r.provider_id = j.at("provider_id").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.threshold = opt<double>(j, "threshold");
    r.n_gold = j.at("n_gold").get<std::size_t>();
    r.n_hits = j.at("n_hits").get<std::size_t>();
    r.hit_rate = j.at("hit_rate").get<double>();
    r.mrr = j.at("mrr").get<double>();
    for (const auto& [rank, n] : j.at("correct_rank_histogram").items()) {
      r.correct_rank_histogram[std::stoi(rank)] = n.get<std::size_t>();
    }
    r.mean_similarity_of_correct = opt<double>(j, "mean_similarity_of_correct");
    r.n_filtered_out = j.value("n_filtered_out", std::size_t{0});
    for (const auto& o : j.at("per_review")) {
      r.per_review.push_back({o.at("review_id").get<std::string>(), o.at("gold_iid").get<std::int64_t>(),
                              opt<int>(o, "rank_found"), opt<double>(o, "similarity"),
                              o.value("filtered_out", false)});
    }
    for (const auto& f : j.value("failures", nlohmann::json::array())) {
      r.failures.push_back({f.at("review_id").get<std::string>(), f.at("error").get<std::string>(),
                            f.value("message", ""), f.value("excluded", false)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed evaluation report: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const ComparisonReport& r) {
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back({{"provider_id", d.provider_id},
                      {"hit_rate_delta", d.hit_rate_delta},
                      {"mrr_delta", d.mrr_delta}});
  }
  j = {{"reports", r.reports}, {"deltas", deltas}};
}

void from_json(const nlohmann::json& j, ComparisonReport& r) {
  try {
    r = ComparisonReport{};
    r.reports = j.at("reports").get<std::vector<EvalReport>>();
    for (const auto& d : j.at("deltas")) {
      r.deltas.push_back({d.at("provider_id").get<std::string>(),
                          d.at("hit_rate_delta").get<double>(), d.at("mrr_delta").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed comparison report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Tables

std::string format_table(const EvalReport& r) {
  std::ostringstream out;
  auto row = [&](const char* label, const std::string& value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%-22s", label);
    out << buf << value << '\n';
  };
  row("provider", r.provider_id);
  row("k", std::to_string(r.k));
  row("threshold", r.threshold ? fixed3(*r.threshold) : "none");
  row("gold reviews", std::to_string(r.n_gold));
  row("hits", std::to_string(r.n_hits) + " (" + pct(r.hit_rate) + ")");
  row("MRR", fixed3(r.mrr));
  row("mean sim. of correct",
      r.mean_similarity_of_correct ? pct(*r.mean_similarity_of_correct) : "n/a");
  std::string hist;
  for (const auto& [rank, n] : r.correct_rank_histogram) {
    if (!hist.empty()) hist += ", ";
    hist += "rank " + std::to_string(rank) + ": " + std::to_string(n);
  }
  row("correct ranks", hist.empty() ? "none" : hist);
  row("filtered out (misses)", std::to_string(r.n_filtered_out));

  std::size_t excluded = 0;
  for (const auto& f : r.failures) excluded += f.excluded;
  if (!r.failures.empty()) {
    out << "\nFAILURES: " << r.failures.size() << " (" << excluded
        << " excluded from rates: embedding failed)\n";
    for (const auto& f : r.failures) {
      out << "  " << f.review_id << "  " << f.error << (f.excluded ? " [excluded]" : "") << "  "
          << f.message << '\n';
    }
  }

  out << '\n';
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %10s %6s %11s\n", "review", "gold", "rank", "similarity");
  out << buf;
  for (const auto& o : r.per_review) {
    const std::string rank = o.rank_found ? std::to_string(*o.rank_found)
                                          : (o.filtered_out ? "filt" : "-");
    std::snprintf(buf, sizeof buf, "%-24s %10lld %6s %11s\n", o.review_id.c_str(),
                  static_cast<long long>(o.gold_iid), rank.c_str(),
                  o.similarity ? pct(*o.similarity).c_str() : "-");
    out << buf;
  }
  return out.str();
}

std::string format_table(const ComparisonReport& r) {
  std::ostringstream out;
  char buf[200];
  const std::size_t k = r.reports.empty() ? kDefaultTopK : r.reports.front().k;
  const std::string hit_col = "hit@" + std::to_string(k);
  std::snprintf(buf, sizeof buf, "%-36s %8s %8s %7s %12s %12s\n", "provider", "hits",
                hit_col.c_str(), "MRR", "d hit-rate", "d MRR");
  out << buf;
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& e = r.reports[i];
    const auto& d = r.deltas.at(i);
    const std::string hits = std::to_string(e.n_hits) + "/" + std::to_string(e.n_gold);
    const std::string mrr_delta = (d.mrr_delta < 0 ? "" : "+") + fixed3(d.mrr_delta);
    std::snprintf(buf, sizeof buf, "%-36s %8s %8s %7s %12s %12s\n", e.provider_id.c_str(),
                  hits.c_str(), pct(e.hit_rate).c_str(), fixed3(e.mrr).c_str(),
                  signed_pct(d.hit_rate_delta).c_str(), mrr_delta.c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace crowdmatch
