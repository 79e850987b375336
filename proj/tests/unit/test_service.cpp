#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "../support/mini_corpus.hpp"
#include "../support/benchmark_fixture.hpp"
#include "../support/temp_dir.hpp"
#include "crowdmatch/service.hpp"

using namespace crowdmatch;
using namespace crowdmatch::test_support;
using nlohmann::json;

namespace {

class MiniService : public ::testing::Test {
 protected:
  void SetUp() override {
    make_mini_workspace(dir_ / "ws");
    ctx_ = AppContext::open(dir_ / "ws");
    service_ = std::make_shared<ApiService>(ctx_);
  }

  ApiResponse match(const json& body) { return service_->match(body.dump()); }

  TempDir dir_;
  std::shared_ptr<AppContext> ctx_;
  std::shared_ptr<ApiService> service_;
};

void expect_error(const ApiResponse& r, int status, const std::string& code) {
  EXPECT_EQ(r.status, status) << r.body.dump();
  ASSERT_TRUE(r.body.contains("error")) << r.body.dump();
  EXPECT_EQ(r.body["error"]["code"], code);
  EXPECT_TRUE(r.body["error"]["message"].is_string());
}

}  // namespace

TEST_F(MiniService, MatchReturnsSortedCandidates) {
  const auto r = match({{"text", "The audio keeps cutting off"}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto& c = r.body["candidates"];
  ASSERT_EQ(c.size(), 5u);
  EXPECT_EQ(c[0]["iid"], 1);
  EXPECT_EQ(c[0]["rank"], 1);
  EXPECT_EQ(c[0]["title"], "Audio cuts off on Android");
  EXPECT_EQ(c[0]["url"], "https://gitlab.example.org/media/player/-/issues/1");
  EXPECT_NEAR(c[0]["similarity"].get<double>(), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(c[0]["similarity_percent"].get<double>(), 33.3);
  EXPECT_EQ(c[1]["iid"], 9);
  for (std::size_t i = 1; i < c.size(); ++i) {
    EXPECT_GE(c[i - 1]["similarity"].get<double>(), c[i]["similarity"].get<double>());
  }
  EXPECT_EQ(r.body["provider_id"], "ref-384");
  EXPECT_EQ(r.body["k_requested"], 5);
  EXPECT_TRUE(r.body["threshold_applied"].is_null());
  EXPECT_FALSE(r.body.contains("label"));
  EXPECT_FALSE(r.body.contains("translated_text"));
}

TEST_F(MiniService, MatchValidation) {
  expect_error(match({{"text", "x y"}, {"k", 0}}), 400, "invalid_body");
  expect_error(match({{"text", "x y"}, {"k", 2.5}}), 400, "invalid_body");
  expect_error(match({{"text", "x y"}, {"threshold", 1.5}}), 400, "invalid_body");
  expect_error(match({{"text", "   "}}), 400, "invalid_body");
  expect_error(match({{"k", 3}}), 400, "invalid_body");
  expect_error(match({{"text", "x y"}, {"classify_filter", {"spam"}}}), 400, "invalid_body");
  expect_error(service_->match("{not json"), 400, "invalid_body");
  expect_error(service_->match("[1,2]"), 400, "invalid_body");
}

TEST_F(MiniService, MatchProviderErrors) {
  expect_error(match({{"text", "x y"}, {"provider", "nope"}}), 409, "unknown_provider");
  expect_error(match({{"text", "x y"}, {"provider", "pooled:hashctx-384:stopword-v1"}}), 409,
               "no_embeddings");
  // No translator configured: the enrichment step is down.
  expect_error(match({{"text", "o áudio corta"}, {"lang", "pt"}, {"translate_to", "en"}}), 502,
               "provider_unavailable");
}

TEST_F(MiniService, MatchFilterAndKnobs) {
  auto r = match({{"text", "Love this player!!!"}, {"classify_filter", {"bug"}}});
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["filtered_out"].get<bool>());
  EXPECT_TRUE(r.body["candidates"].empty());
  EXPECT_EQ(r.body["label"], "irrelevant");

  r = match({{"text", "The audio keeps cutting off"}, {"k", 3}, {"threshold", 0.2}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["candidates"].size(), 2u);  // 0.333 and 0.289 clear the bar
  EXPECT_EQ(r.body["threshold_applied"], 0.2);
}

TEST_F(MiniService, IssueListing) {
  auto r = service_->issues("AUDIO", "");
  ASSERT_EQ(r.status, 200);
  ASSERT_GE(r.body["issues"].size(), 1u);
  for (const auto& i : r.body["issues"]) {
    std::string t = i["title"];
    std::transform(t.begin(), t.end(), t.begin(), ::tolower);
    EXPECT_NE(t.find("audio"), std::string::npos);
  }
  EXPECT_EQ(service_->issues("", "1").body["total"], 12);
  const auto beyond = service_->issues("", "9");
  EXPECT_EQ(beyond.status, 200);
  EXPECT_TRUE(beyond.body["issues"].empty());
  expect_error(service_->issues("", "zero"), 400, "invalid_body");
  expect_error(service_->issues("", "0"), 400, "invalid_body");
}

TEST_F(MiniService, TriageContract) {
  auto linked = service_->triage(
      json{{"review_text", "Audio drops on my phone"}, {"decision", "linked"}, {"issue_iid", 1}}
          .dump());
  ASSERT_EQ(linked.status, 201) << linked.body.dump();
  EXPECT_EQ(linked.body["decision"], "linked");
  EXPECT_EQ(linked.body["issue_iid"], 1);
  EXPECT_EQ(linked.body["review_id"], content_hash("Audio drops on my phone"));
  EXPECT_EQ(service_->stats().body["gold_links"], 7);
  EXPECT_EQ(service_->stats().body["reviews"], 9);

  expect_error(service_->triage(json{{"review_id", "r7"}, {"decision", "linked"}}.dump()), 400,
               "invalid_body");
  expect_error(
      service_->triage(json{{"review_id", "absent-id"}, {"decision", "dismissed"}}.dump()), 404,
      "unknown_review");
  expect_error(service_->triage(
                   json{{"review_id", "r7"}, {"decision", "linked"}, {"issue_iid", 999}}.dump()),
               404, "unknown_issue");
  expect_error(service_->triage(json{{"review_id", "r7"}, {"decision", "maybe"}}.dump()), 400,
               "invalid_body");
  expect_error(service_->triage(json{{"review_text", "new"},
                                     {"review_id", "r7"},
                                     {"decision", "dismissed"}}
                                    .dump()),
               400, "invalid_body");

  auto fresh = service_->triage(
      json{{"review_id", "r8"}, {"decision", "new_issue"}}.dump());
  ASSERT_EQ(fresh.status, 201);
  EXPECT_EQ(fresh.body["suggested_title"], "nice sleep timer");
  EXPECT_EQ(service_->stats().body["triage_decisions"], 2);
  EXPECT_EQ(service_->stats().body["gold_links"], 7);
}

TEST_F(MiniService, ConcurrentTriageIsSerialized) {
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      const auto r = service_->triage(
          json{{"review_text", "review number " + std::to_string(i)}, {"decision", "dismissed"}}
              .dump());
      if (r.status == 201) ++created;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(created.load(), 8);
  const auto stats = service_->stats().body;
  EXPECT_EQ(stats["triage_decisions"], 8);
  EXPECT_EQ(stats["reviews"], 16);
}

TEST(BenchmarkService, StatsOnFreshFixture) {
  TempDir dir;
  write_benchmark_fixture(dir / "ws", true);
  ApiService service(AppContext::open(dir / "ws"));
  const auto r = service.stats();
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["issues"], 574);
  EXPECT_EQ(r.body["reviews"], 69);
  EXPECT_EQ(r.body["gold_links"], 23);
  EXPECT_EQ(r.body["embeddings"]["fixture-a"], 574);
  EXPECT_TRUE(r.body["last_eval"].is_null());

  const auto page = service.issues("", "12");
  EXPECT_EQ(page.body["issues"].size(), 24u);  // 574 = 11 * 50 + 24
  EXPECT_EQ(page.body["total"], 574);

  const auto linked = service.triage(
      json{{"review_id", "pr30"}, {"decision", "linked"}, {"issue_iid", 42}}.dump());
  EXPECT_EQ(linked.status, 201);
  EXPECT_EQ(service.stats().body["gold_links"], 24);
}

TEST(ServiceHttp, JsonOverTheWire) {
  TempDir dir;
  make_mini_workspace(dir / "ws");
  auto ctx = AppContext::open(dir / "ws");
  auto service = std::make_shared<ApiService>(ctx);
  ApiServer server(service, "http://localhost:5173");
  const int port = server.bind("127.0.0.1", 0);
  server.start();
  httplib::Client client("127.0.0.1", port);

  const std::string body = json{{"text", "Subtitles are always out of sync"}}.dump();
  auto res = client.Post("/api/match", body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_EQ(res->body, render_json(service->match(body).body));

  res = client.Post("/api/match", R"({"text":"x y","k":0})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "invalid_body");

  res = client.Get("/api/nowhere");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "not_found");

  res = client.Options("/api/match");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");

  res = client.Get("/api/issues?query=audio&page=1");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["issues"][0]["iid"], 1);

  res = client.Post("/api/triage",
                    json{{"review_id", "r7"}, {"decision", "dismissed"}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  server.stop();
}

TEST(ServiceHttp, ConcurrentFirstMatchesBuildIndexOnce) {
  TempDir dir;
  make_mini_workspace(dir / "ws");
  auto ctx = AppContext::open(dir / "ws");
  auto service = std::make_shared<ApiService>(ctx);
  ApiServer server(service, "*");
  const int port = server.bind("127.0.0.1", 0);
  server.start();

  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 12; ++i) {
    threads.emplace_back([&] {
      httplib::Client client("127.0.0.1", port);
      auto res = client.Post("/api/match", R"({"text":"App crashes on settings"})",
                             "application/json");
      if (res && res->status == 200) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  server.stop();
  EXPECT_EQ(ok.load(), 12);
  EXPECT_EQ(ctx->matcher().index_builds(), 1u);
}
