#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "crowdmatch/model.hpp"

using namespace crowdmatch;

namespace {

EmbeddingVector v(std::vector<double> values, std::string id = "t") {
  return {std::move(id), std::move(values)};
}

}  // namespace

TEST(Cosine, IdenticalAndOrthogonal) {
  EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({0, 1})), 0.0);
}

TEST(Cosine, FortyFiveDegrees) {
  EXPECT_NEAR(cosine_similarity(v({1, 1}), v({1, 0})), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(cosine_similarity(v({1, 1}), v({1, 0})), 0.70710678, 1e-8);
}

TEST(Cosine, Errors) {
  try {
    cosine_similarity(v({1, 0}), v({1, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    cosine_similarity(v({1, 0}), v({1, 0}, "other"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    cosine_similarity(v({0, 0}), v({1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Cosine, SymmetricAndScaleInvariantArgmax) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 1 + trial % 16;
    auto draw = [&] {
      std::vector<double> x(dim);
      for (auto& e : x) e = n(rng);
      return v(x);
    };
    const auto q = draw();
    std::vector<EmbeddingVector> cands;
    for (int i = 0; i < 20; ++i) cands.push_back(draw());
    for (const auto& c : cands) {
      EXPECT_EQ(cosine_similarity(q, c), cosine_similarity(c, q));
    }
    const double scale = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    std::vector<double> scaled(q.values().begin(), q.values().end());
    for (auto& e : scaled) e *= scale;
    auto argmax = [&](const EmbeddingVector& query) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < cands.size(); ++i) {
        if (cosine_similarity(query, cands[i]) > cosine_similarity(query, cands[best])) best = i;
      }
      return best;
    };
    EXPECT_EQ(argmax(q), argmax(v(scaled)));
  }
}

TEST(Normalize, Examples) {
  const auto r = l2_normalize(v({3, 4}, "p"));
  EXPECT_NEAR(r[0], 0.6, 1e-12);
  EXPECT_NEAR(r[1], 0.8, 1e-12);
  EXPECT_EQ(r.provider_id(), "p");
  EXPECT_EQ(l2_normalize(v({1, 0, 0})), v({1, 0, 0}));
  try {
    l2_normalize(v({0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Normalize, UnitNormAndIdempotent) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(1 + trial % 40);
    for (auto& e : x) e = u(rng);
    const auto once = l2_normalize(v(x));
    EXPECT_NEAR(l2_norm(once.values()), 1.0, 1e-9);
    const auto twice = l2_normalize(once);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
  }
}

TEST(MeanPool, Examples) {
  std::vector<EmbeddingVector> a{v({1, 0}), v({0, 1})};
  EXPECT_EQ(mean_pool(a), v({0.5, 0.5}));
  std::vector<EmbeddingVector> b{v({2, 2})};
  EXPECT_EQ(mean_pool(b), v({2, 2}));
  // Column means of (1,3,2) and (1,1,4).
  std::vector<EmbeddingVector> c{v({1, 1}), v({3, 1}), v({2, 4})};
  EXPECT_EQ(mean_pool(c), v({2.0, 2.0}));
}

TEST(MeanPool, Errors) {
  try {
    mean_pool(std::span<const EmbeddingVector>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  std::vector<EmbeddingVector> mixed{v({1, 0}), v({1, 0, 0})};
  try {
    mean_pool(mixed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(MeanPool, CopiesOfOneVector) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(8);
    for (auto& e : x) e = u(rng);
    std::vector<EmbeddingVector> copies(1 + trial % 30, v(x));
    const auto m = mean_pool(copies);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(m[i], x[i], 1e-12);
  }
}

TEST(EmbeddingVector, RejectsNonFinite) {
  EXPECT_THROW(v({1.0, std::nan("")}), Error);
  EXPECT_THROW(v({}), Error);
}

TEST(Percent, RoundHalfUp) {
  EXPECT_DOUBLE_EQ(similarity_percent(0.831), 83.1);
  EXPECT_DOUBLE_EQ(similarity_percent(0.8), 80.0);
  EXPECT_EQ(format_percent(13.0 / 23.0), "56.5%");
  EXPECT_EQ(format_percent(3.0 / 23.0), "13.0%");
  EXPECT_EQ(format_percent(0.12345), "12.3%");
  EXPECT_EQ(format_percent(0.12350001), "12.4%");
}

TEST(Hash, FnvKnownValues) {
  // Published FNV-1a 64 test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
}

TEST(Records, Validation) {
  Review r{.id = "r1", .original_text = "  "};
  EXPECT_THROW(validate(r), Error);
  r.original_text = "ok";
  EXPECT_NO_THROW(validate(r));
  r.translated_text = "";
  EXPECT_THROW(validate(r), Error);
  Issue i{.iid = 0, .title = "t"};
  EXPECT_THROW(validate(i), Error);
  i.iid = 3;
  EXPECT_NO_THROW(validate(i));
  i.title_translated = "translated";
  EXPECT_EQ(i.embed_text(), "translated");
}
