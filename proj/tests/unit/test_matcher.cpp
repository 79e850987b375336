#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <cmath>
#include <random>
#include <thread>

#include "../support/errors.hpp"
#include "../support/temp_dir.hpp"
#include "crowdmatch/corpus.hpp"
#include "crowdmatch/matcher.hpp"

using namespace crowdmatch;
using test_support::code_of;
using test_support::TempDir;

namespace {

using Vectors = std::vector<std::pair<std::int64_t, EmbeddingVector>>;

Vectors vecs(const std::string& provider,
             std::initializer_list<std::pair<std::int64_t, std::vector<double>>> items) {
  Vectors out;
  for (const auto& [iid, v] : items) out.emplace_back(iid, EmbeddingVector(provider, v));
  return out;
}

std::vector<std::pair<std::int64_t, double>> pairs(const MatchResult& r) {
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& c : r.candidates) out.emplace_back(c.issue_iid, c.similarity);
  return out;
}

// Compute every cosine, sort fully, then filter and cut.
std::vector<std::pair<std::int64_t, double>> naive_top_k(const Vectors& corpus,
                                                          const std::vector<double>& q,
                                                          std::size_t k,
                                                          std::optional<double> threshold) {
  double qn = 0;
  for (double x : q) qn += x * x;
  qn = std::sqrt(qn);
  std::vector<std::pair<std::int64_t, double>> all;
  for (const auto& [iid, v] : corpus) {
    double n = 0;
    for (double x : v.values()) n += x * x;
    n = std::sqrt(n);
    double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] / qn) * (v[i] / n);
    all.emplace_back(iid, std::clamp(s, -1.0, 1.0));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& p : all) {
    if (threshold && p.second < *threshold) continue;
    if (out.size() == k) break;
    out.push_back(p);
  }
  return out;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_int_distribution<int> small(-3, 3);
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = small(rng);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; }));
  return v;
}

Workspace seeded_workspace(const TempDir& dir, const std::string& provider,
                           std::initializer_list<std::pair<std::int64_t, std::vector<double>>> items) {
  auto ws = Workspace::create(dir / "ws");
  std::vector<StoredEmbedding> records;
  for (const auto& [iid, v] : items) {
    records.push_back({EmbeddingKind::Issue, std::to_string(iid), "h" + std::to_string(iid),
                       EmbeddingVector(provider, v)});
  }
  ws.save_embeddings(provider, records);
  return ws;
}

}  // namespace

TEST(MatchIndex, NormalizesAndSortsEntries) {
  auto index = build_index("p", vecs("p", {{7, {3, 4}}, {2, {0, 2}}}));
  ASSERT_EQ(index.entries.size(), 2u);
  EXPECT_EQ(index.entries[0].iid, 2);
  EXPECT_EQ(index.entries[1].iid, 7);
  EXPECT_NEAR(index.entries[1].unit[0], 0.6, 1e-12);
  EXPECT_NEAR(index.entries[1].unit[1], 0.8, 1e-12);
  EXPECT_EQ(index.dim, 2u);
  EXPECT_FALSE(index.built_at.empty());
}

TEST(MatchIndex, Errors) {
  EXPECT_EQ(code_of([] { build_index("p", {}); }), ErrorCode::NoEmbeddings);
  EXPECT_EQ(code_of([] { build_index("p", vecs("p", {{1, {1, 0}}, {2, {1, 0, 0}}})); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { build_index("p", vecs("p", {{1, {1, 0}}, {2, {0, 0}}})); }),
            ErrorCode::ZeroVector);
  EXPECT_EQ(code_of([] { build_index("p", vecs("p", {{1, {1, 0}}, {1, {0, 1}}})); }),
            ErrorCode::InvalidArgument);
}

TEST(MatchIndex, FromWorkspace) {
  TempDir dir;
  auto ws = seeded_workspace(dir, "p", {{1, {3, 4}}, {2, {1, 0}}});
  auto index = build_index(ws, "p");
  EXPECT_EQ(index.entries.size(), 2u);
  EXPECT_EQ(index.source_digest, issue_embeddings_digest(ws, "p"));
  EXPECT_EQ(code_of([&] { build_index(ws, "other"); }), ErrorCode::NoEmbeddings);
}

TEST(MatchIndex, UnitNormInvariant) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    Vectors corpus;
    for (int i = 1; i <= 20; ++i) corpus.emplace_back(i, EmbeddingVector("p", random_vec(rng, 8)));
    auto index = build_index("p", corpus);
    for (const auto& e : index.entries) {
      double n = 0;
      for (double x : e.unit) n += x * x;
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
  }
}

TEST(QueryTopK, WorkedExample) {
  auto index = build_index("p", vecs("p", {{1, {1, 0}}, {2, {0, 1}}, {3, {0.6, 0.8}}}));
  auto r = query_top_k(index, EmbeddingVector("p", {1, 0}), 2);
  ASSERT_EQ(r.candidates.size(), 2u);
  EXPECT_EQ(r.candidates[0].issue_iid, 1);
  EXPECT_DOUBLE_EQ(r.candidates[0].similarity, 1.0);
  EXPECT_EQ(r.candidates[0].rank, 1);
  EXPECT_EQ(r.candidates[1].issue_iid, 3);
  EXPECT_NEAR(r.candidates[1].similarity, 0.6, 1e-12);
  EXPECT_EQ(r.candidates[1].rank, 2);
  EXPECT_EQ(r.k_requested, 2u);
  EXPECT_FALSE(r.threshold_applied);

  auto t = query_top_k(index, EmbeddingVector("p", {1, 0}), 2, 0.9);
  ASSERT_EQ(t.candidates.size(), 1u);
  EXPECT_EQ(t.candidates[0].issue_iid, 1);
  EXPECT_EQ(t.threshold_applied, 0.9);
}

TEST(QueryTopK, TieBreakByLowerIid) {
  auto index = build_index("p", vecs("p", {{9, {1, 1}}, {4, {2, 2}}, {6, {0, 1}}}));
  auto r = query_top_k(index, EmbeddingVector("p", {5, 5}), 3);
  ASSERT_EQ(r.candidates.size(), 3u);
  EXPECT_EQ(r.candidates[0].issue_iid, 4);
  EXPECT_EQ(r.candidates[1].issue_iid, 9);
  EXPECT_EQ(r.candidates[0].similarity, r.candidates[1].similarity);
}

TEST(QueryTopK, KClampedToCorpus) {
  auto index = build_index("p", vecs("p", {{1, {1, 0}}, {2, {0, 1}}}));
  EXPECT_EQ(query_top_k(index, EmbeddingVector("p", {1, 1}), 3).candidates.size(), 2u);
}

TEST(QueryTopK, Errors) {
  auto index = build_index("p", vecs("p", {{1, {1, 0}}}));
  EXPECT_EQ(code_of([&] { query_top_k(index, EmbeddingVector("p", {1, 0, 0}), 1); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { query_top_k(index, EmbeddingVector("q", {1, 0}), 1); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { query_top_k(index, EmbeddingVector("p", {0, 0}), 1); }),
            ErrorCode::ZeroVector);
  EXPECT_EQ(code_of([&] { query_top_k(index, EmbeddingVector("p", {1, 0}), 0); }),
            ErrorCode::InvalidArgument);
}

TEST(QueryTopKProperty, MatchesNaiveOracle) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 200; ++round) {
    const std::size_t dim = std::vector<std::size_t>{2, 8, 64}[round % 3];
    const std::size_t n = 1 + rng() % 200;
    Vectors corpus;
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 1);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      // Repeat earlier vectors now and then so ties occur.
      if (i > 0 && rng() % 4 == 0) {
        corpus.emplace_back(ids[i], corpus[rng() % i].second);
      } else {
        corpus.emplace_back(ids[i], EmbeddingVector("p", random_vec(rng, dim)));
      }
    }
    const auto index = build_index("p", corpus);
    const auto q = random_vec(rng, dim);
    const std::size_t k = 1 + rng() % 12;
    std::optional<double> threshold;
    if (rng() % 2) threshold = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto got = query_top_k(index, EmbeddingVector("p", q), k, threshold);
    ASSERT_EQ(pairs(got), naive_top_k(corpus, q, k, threshold)) << "round " << round;
    for (std::size_t i = 0; i < got.candidates.size(); ++i) {
      EXPECT_EQ(got.candidates[i].rank, static_cast<int>(i + 1));
    }
  }
}

TEST(QueryTopKProperty, ScaleInvariantPrefixAndThresholdNone) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 100; ++round) {
    Vectors corpus;
    for (int i = 1; i <= 60; ++i) corpus.emplace_back(i, EmbeddingVector("p", random_vec(rng, 8)));
    const auto index = build_index("p", corpus);
    auto q = random_vec(rng, 8);
    const double th = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);

    auto base = query_top_k(index, EmbeddingVector("p", q), 5, th);
    auto scaled_q = q;
    for (auto& x : scaled_q) x *= 4.0;  // power of two keeps the unit vector bit-identical
    EXPECT_EQ(pairs(query_top_k(index, EmbeddingVector("p", scaled_q), 5, th)), pairs(base));
    auto odd_q = q;
    for (auto& x : odd_q) x *= 3.7;
    auto odd = query_top_k(index, EmbeddingVector("p", odd_q), 5, th);
    ASSERT_EQ(odd.candidates.size(), base.candidates.size());
    for (std::size_t i = 0; i < odd.candidates.size(); ++i) {
      EXPECT_NEAR(odd.candidates[i].similarity, base.candidates[i].similarity, 1e-12);
    }

    for (std::size_t k = 1; k < 10; ++k) {
      auto a = pairs(query_top_k(index, EmbeddingVector("p", q), k, th));
      auto b = pairs(query_top_k(index, EmbeddingVector("p", q), k + 1, th));
      ASSERT_LE(a.size(), b.size());
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
    EXPECT_EQ(pairs(query_top_k(index, EmbeddingVector("p", q), 7)),
              pairs(query_top_k(index, EmbeddingVector("p", q), 7, -1.0)));
  }
}

class MatcherTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ws_ = std::make_unique<Workspace>(Workspace::create(dir_ / "ws"));
    registry_ = std::make_shared<ProviderRegistry>();
    register_builtin_providers(*registry_);
    std::vector<Issue> issues;
    const char* titles[] = {"Audio cuts off on Android", "App crashes when opening settings",
                            "Add dark mode theme", "Subtitles out of sync with video",
                            "Playback stutters on 4K videos", "Cannot cast to Chromecast"};
    for (int i = 0; i < 6; ++i) {
      issues.push_back({.iid = i + 1, .title = titles[i], .created_at = "2024-01-01T00:00:00Z"});
    }
    ws_->save_issues(issues);
    upsert_embeddings(*ws_, *registry_->get_provider("ref-384"), EmbeddingKind::Issue);
  }

  Matcher matcher(std::shared_ptr<Translator> translator = nullptr) {
    return Matcher(*ws_, registry_, std::make_shared<Enricher>(std::move(translator), nullptr));
  }

  TempDir dir_;
  std::unique_ptr<Workspace> ws_;
  std::shared_ptr<ProviderRegistry> registry_;
};

TEST_F(MatcherTest, EnglishReviewGetsFiveSortedCandidates) {
  auto m = matcher();
  auto r = m.match_review("The audio keeps cutting off", {});
  ASSERT_EQ(r.candidates.size(), 5u);
  EXPECT_EQ(r.candidates[0].issue_iid, 1);
  EXPECT_NEAR(r.candidates[0].similarity, 1.0 / 3.0, 1e-12);
  for (std::size_t i = 1; i < r.candidates.size(); ++i) {
    const auto& a = r.candidates[i - 1];
    const auto& b = r.candidates[i];
    EXPECT_TRUE(a.similarity > b.similarity ||
                (a.similarity == b.similarity && a.issue_iid < b.issue_iid));
  }
  EXPECT_EQ(r.provider_id, "ref-384");
  EXPECT_EQ(r.query_text, "The audio keeps cutting off");
  EXPECT_FALSE(r.label);
  EXPECT_FALSE(r.filtered_out);
}

TEST_F(MatcherTest, ClassFilterExcludesIrrelevant) {
  auto m = matcher();
  MatchOptions opts;
  opts.classify_filter = std::set<ReviewClass>{ReviewClass::BugReport};
  auto r = m.match_review("Love this player, five stars", opts);
  EXPECT_TRUE(r.filtered_out);
  EXPECT_TRUE(r.candidates.empty());
  EXPECT_EQ(r.label, ReviewClass::Irrelevant);

  auto bug = m.match_review("The app crashes when I open settings", opts);
  EXPECT_FALSE(bug.filtered_out);
  EXPECT_EQ(bug.label, ReviewClass::BugReport);
  EXPECT_EQ(bug.candidates.front().issue_iid, 2);
}

TEST_F(MatcherTest, TranslatesBeforeEmbedding) {
  auto cache = std::make_shared<TranslationCache>();
  auto adapter = std::make_shared<RecordedTranslator>();
  adapter->record("O áudio corta", "pt", "en", "The audio cuts off");
  auto m = matcher(std::make_shared<Translator>(adapter, cache));
  MatchOptions opts;
  opts.translate_to = "en";
  opts.source_lang = "pt";
  auto r = m.match_review("O áudio corta", opts);
  EXPECT_EQ(r.translated_text, "The audio cuts off");
  EXPECT_EQ(r.candidates.front().issue_iid, 1);

  auto no_translator = matcher();
  EXPECT_EQ(code_of([&] { no_translator.match_review("O áudio corta", opts); }),
            ErrorCode::ProviderUnavailable);
}

TEST_F(MatcherTest, OptionAndProviderErrors) {
  auto m = matcher();
  MatchOptions bad_k;
  bad_k.k = 0;
  EXPECT_EQ(code_of([&] { m.match_review("x y", bad_k); }), ErrorCode::InvalidArgument);
  MatchOptions bad_t;
  bad_t.threshold = 1.5;
  EXPECT_EQ(code_of([&] { m.match_review("x y", bad_t); }), ErrorCode::InvalidArgument);
  MatchOptions unknown;
  unknown.provider = "nope";
  EXPECT_EQ(code_of([&] { m.match_review("x y", unknown); }), ErrorCode::UnknownProvider);
  MatchOptions unembedded;
  unembedded.provider = "pooled:hashctx-384:stopword-v1";
  EXPECT_EQ(code_of([&] { m.match_review("x y", unembedded); }), ErrorCode::NoEmbeddings);
  EXPECT_EQ(code_of([&] { m.match_review("   ", {}); }), ErrorCode::EmptyText);
}

TEST_F(MatcherTest, IndexBuiltOnceUnderConcurrency) {
  auto m = matcher();
  std::vector<std::thread> threads;
  std::vector<std::shared_ptr<const MatchIndex>> seen(16);
  for (int i = 0; i < 16; ++i) {
    threads.emplace_back([&, i] { seen[i] = m.index("ref-384"); });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(m.index_builds(), 1u);
  for (const auto& p : seen) EXPECT_EQ(p, seen[0]);

  auto held = m.index("ref-384");
  m.invalidate("ref-384");
  auto fresh = m.index("ref-384");
  EXPECT_EQ(m.index_builds(), 2u);
  EXPECT_NE(held, fresh);
  EXPECT_EQ(held->entries.size(), 6u);  // old snapshot stays usable
}

TEST_F(MatcherTest, FailedBuildIsRetried) {
  auto m = matcher();
  const std::string pooled = "pooled:hashctx-384:stopword-v1";
  EXPECT_EQ(code_of([&] { m.index(pooled); }), ErrorCode::NoEmbeddings);
  upsert_embeddings(*ws_, *registry_->get_provider(pooled), EmbeddingKind::Issue);
  EXPECT_EQ(m.index(pooled)->entries.size(), 6u);
}

TEST_F(MatcherTest, ConcurrentQueriesAgree) {
  auto m = matcher();
  const auto expected = pairs(m.match_review("Subtitles drift out of sync", {}));
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      for (int j = 0; j < 20; ++j) {
        if (pairs(m.match_review("Subtitles drift out of sync", {})) != expected) ++mismatches;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}
