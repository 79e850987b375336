#include "benchmark_fixture.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "crowdmatch/app.hpp"
#include "crowdmatch/corpus.hpp"
#include "crowdmatch/embedding.hpp"

namespace crowdmatch::test_support {

namespace {

constexpr std::size_t kDim = 72;
constexpr std::size_t kNoiseAxis = kDim - 1;
constexpr const char* kStamp = "2024-05-01T00:00:00Z";

const std::array<const char*, 12> kComponents = {
    "Playback", "Audio", "Subtitles", "Playlist", "Equalizer", "Casting",
    "Downloads", "Search", "Login", "Notifications", "Widget", "Settings"};
const std::array<const char*, 8> kSymptoms = {
    "stops unexpectedly", "shows wrong state", "is slow", "crashes",
    "ignores user choice", "loses data", "renders incorrectly", "drains battery"};
const std::array<const char*, 6> kContexts = {
    "on Android 14", "after update", "in background", "on tablets",
    "with Bluetooth headset", "in landscape mode"};

const std::array<const char*, 23> kGoldReviewTexts = {
    "music stops every few minutes",
    "the player says paused but it is playing",
    "songs take forever to start",
    "app closes when I open my playlist",
    "equalizer never keeps my preset",
    "my downloads disappeared",
    "lyrics are drawn on top of the buttons",
    "battery goes down fast while listening",
    "cannot log in since yesterday",
    "no notification controls anymore",
    "the widget is stuck on the old song",
    "settings screen is empty",
    "chromecast button does nothing",
    "search never finds my albums",
    "subtitles appear too late",
    "sound is distorted with headphones",
    "rotating the phone restarts the track",
    "offline mode still asks for internet",
    "the shuffle repeats the same songs",
    "volume jumps to maximum",
    "tablet layout is cut off",
    "app freezes after the latest update",
    "sleep timer does not stop the music"};

std::vector<double> axis(std::size_t a, double c) {
  std::vector<double> v(kDim, 0.0);
  v[a] = c;
  if (std::abs(c) < 1.0) v[kNoiseAxis] = std::sqrt(1.0 - c * c);
  return v;
}

std::vector<double> noise() { return axis(kNoiseAxis, 1.0); }

// Review j gets axis j. A gold issue at cosine c is c*e_j + s*e_noise; a
// gold issue pushed to the bottom is -e_j. Distractors ranked above the gold
// issue reuse the slots right after it.
struct Layout {
  std::vector<std::vector<double>> issues;  // index iid-1
  std::vector<std::vector<double>> reviews;
};

Layout base_layout(const BenchmarkFixture& fx) {
  Layout l;
  l.issues.assign(fx.issue_titles.size(), noise());
  for (std::size_t r = 0; r < fx.review_ids.size(); ++r) l.reviews.push_back(axis(r, 1.0));
  return l;
}

void place(Layout& l, const BenchmarkFixture& fx, std::size_t j, double gold_cos,
           std::size_t distractors, double distractor_cos) {
  const auto g = static_cast<std::size_t>(fx.gold_iids[j]);
  l.issues[g - 1] = axis(j, gold_cos);
  for (std::size_t d = 1; d <= distractors; ++d) l.issues[g - 1 + d] = axis(j, distractor_cos);
}

void miss(Layout& l, const BenchmarkFixture& fx, std::size_t j) {
  l.issues[static_cast<std::size_t>(fx.gold_iids[j]) - 1] = axis(j, -1.0);
}

Layout layout_b(const BenchmarkFixture& fx) {
  Layout l = base_layout(fx);
  for (std::size_t j = 0; j < 10; ++j) place(l, fx, j, 0.9, 0, 0);
  place(l, fx, 10, 0.85, 1, 0.95);
  place(l, fx, 11, 0.85, 1, 0.95);
  place(l, fx, 12, 0.8, 2, 0.9);
  for (std::size_t j = 13; j < kBenchmarkGold; ++j) miss(l, fx, j);
  return l;
}

Layout layout_a(const BenchmarkFixture& fx) {
  Layout l = base_layout(fx);
  place(l, fx, 0, 0.80, 4, 0.9);
  place(l, fx, 1, 0.80, 4, 0.9);
  place(l, fx, 2, 0.83, 1, 0.9);
  place(l, fx, 3, 0.85, 5, 0.9);  // rank 6: just outside the list
  for (std::size_t j = 4; j < kBenchmarkGold; ++j) miss(l, fx, j);
  return l;
}

void write_provider(const std::filesystem::path& file, const char* id, const BenchmarkFixture& fx,
                    const Layout& l) {
  RecordedSentenceAdapter adapter(id, std::string("recorded-") + id, kDim);
  for (std::size_t i = 0; i < fx.issue_titles.size(); ++i) {
    adapter.record(fx.issue_titles[i], l.issues[i]);
  }
  for (std::size_t r = 0; r < fx.review_texts.size(); ++r) {
    adapter.record(fx.review_texts[r], l.reviews[r]);
  }
  adapter.save(file);
}

}  // namespace

BenchmarkFixture benchmark_fixture_spec() {
  BenchmarkFixture s;
  for (std::size_t i = 0; i < kBenchmarkIssues; ++i) {
    const std::size_t c = i % kComponents.size();
    const std::size_t y = (i / kComponents.size()) % kSymptoms.size();
    const std::size_t x = i / (kComponents.size() * kSymptoms.size());
    s.issue_titles.push_back(std::string(kComponents[c]) + " " + kSymptoms[y] + " " +
                             kContexts[x]);
  }
  for (std::size_t r = 0; r < kBenchmarkReviews; ++r) {
    char id[8];
    std::snprintf(id, sizeof id, "pr%02zu", r + 1);
    s.review_ids.push_back(id);
    if (r < kBenchmarkGold) {
      s.review_texts.push_back(kGoldReviewTexts[r]);
    } else {
      s.review_texts.push_back("Nice app, " + std::string(kComponents[r % kComponents.size()]) +
                               " could be better (" + std::to_string(r + 1) + ")");
    }
  }
  for (std::size_t j = 0; j < kBenchmarkGold; ++j) {
    s.gold_iids.push_back(static_cast<std::int64_t>(20 + 24 * j));
  }
  return s;
}

void write_benchmark_fixture(const std::filesystem::path& root, bool embed_issues) {
  const BenchmarkFixture fx = benchmark_fixture_spec();
  Workspace ws = Workspace::create(root);
  ws.save_meta({kSchemaVersion, "media/player"});

  std::vector<Issue> issues;
  for (std::size_t i = 0; i < fx.issue_titles.size(); ++i) {
    const auto iid = static_cast<std::int64_t>(i + 1);
    issues.push_back({.iid = iid,
                      .title = fx.issue_titles[i],
                      .state = i % 5 == 4 ? IssueState::Closed : IssueState::Open,
                      .url = "https://gitlab.example.com/media/player/-/issues/" + std::to_string(iid),
                      .created_at = kStamp});
  }
  ws.save_issues(issues);

  std::vector<Review> reviews;
  for (std::size_t r = 0; r < fx.review_ids.size(); ++r) {
    Review review;
    review.id = fx.review_ids[r];
    review.original_text = fx.review_texts[r];
    review.source = "play-store";
    review.created_at = kStamp;
    reviews.push_back(std::move(review));
  }
  ws.save_reviews(reviews);

  LinkLog links;
  for (std::size_t j = 0; j < kBenchmarkGold; ++j) {
    links.gold.push_back({fx.review_ids[j], fx.gold_iids[j], LinkOrigin::Imported, kStamp});
  }
  ws.save_links(links);

  std::filesystem::create_directories(root / "fixtures");
  write_provider(root / "fixtures" / "fixture-a.json", kProviderA, fx, layout_a(fx));
  write_provider(root / "fixtures" / "fixture-b.json", kProviderB, fx, layout_b(fx));
  const nlohmann::json config = {
      {"default_provider", kProviderB},
      {"providers",
       {{{"type", "recorded_sentence"}, {"fixture", "fixtures/fixture-a.json"}},
        {{"type", "recorded_sentence"}, {"fixture", "fixtures/fixture-b.json"}}}}};
  std::ofstream(root / "config.json") << config.dump(2) << '\n';

  if (embed_issues) {
    auto ctx = AppContext::open(root);
    for (const char* id : {kProviderA, kProviderB}) {
      Workspace w = ctx->workspace();
      upsert_embeddings(w, *ctx->registry().get_provider(id), EmbeddingKind::Issue);
    }
  }
}

}  // namespace crowdmatch::test_support
