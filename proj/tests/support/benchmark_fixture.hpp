#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace crowdmatch::test_support {

// Benchmark workspace: 574 tracker issues, 69
// reviews, 23 of them gold-linked. Two recorded sentence providers come with
// vectors laid out so that top-5 retrieval lands exactly:
//   fixture-b: 13 of 23 gold issues found
//   fixture-a:  3 of 23 found, at ranks 5, 5 and 2 with similarity .80, .80, .83
inline constexpr const char* kProviderA = "fixture-a";
inline constexpr const char* kProviderB = "fixture-b";
inline constexpr std::size_t kBenchmarkIssues = 574;
inline constexpr std::size_t kBenchmarkReviews = 69;
inline constexpr std::size_t kBenchmarkGold = 23;

struct BenchmarkFixture {
  std::vector<std::string> issue_titles;  // index iid-1
  std::vector<std::string> review_ids;
  std::vector<std::string> review_texts;
  std::vector<std::int64_t> gold_iids;  // for the first kBenchmarkGold reviews
};

BenchmarkFixture benchmark_fixture_spec();

/// Writes the workspace (meta, issues, reviews, links, config, provider
/// fixtures). With `embed_issues`, also stores issue vectors for both
/// providers.
void write_benchmark_fixture(const std::filesystem::path& root, bool embed_issues);

}  // namespace crowdmatch::test_support
