#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace crowdmatch {

/// A token of a normalized string. Offsets count Unicode scalar values of
/// the normalized string; `end` is exclusive.
struct TokenSpan {
  std::string text;  // UTF-8
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// mapping[i] lists (ascending) the positions in sequence B whose spans
/// overlap token i of sequence A.
using AlignmentMap = std::vector<std::vector<std::size_t>>;

/// NFKC normalization followed by lowercasing. Input must be UTF-8;
/// invalid sequences are replaced with U+FFFD.
std::string normalize_text(std::string_view text);

/// Tokenizes an already-normalized string: maximal runs of alphanumeric
/// code points become tokens.
std::vector<TokenSpan> tokenize_normalized(std::string_view normalized);

/// normalize_text + tokenize_normalized.
std::vector<TokenSpan> basic_tokenize(std::string_view text);

/// All (i, j) pairs whose spans intersect. Linear merge over both
/// sequences; both must be sorted and non-overlapping.
AlignmentMap align_tokens(const std::vector<TokenSpan>& a, const std::vector<TokenSpan>& b);

/// Plain-text stopword list: one token per line, '#' starts a comment.
class StopwordList {
 public:
  /// The bundled English list.
  static const StopwordList& builtin();
  static StopwordList from_text(std::string_view text);
  /// Throws Error(Storage) when the file cannot be read.
  static StopwordList load(const std::filesystem::path& path);

  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

/// Keeps tokens that are not stopwords, have at least two code points and
/// are not purely numeric. Returns strictly increasing indices.
std::vector<std::size_t> content_filter(const std::vector<TokenSpan>& tokens,
                                        const StopwordList& stopwords = StopwordList::builtin());

/// Tokens of a normalized text plus the indices a filter decided to keep.
struct FilteredTokens {
  std::vector<TokenSpan> tokens;
  std::vector<std::size_t> kept;
};

/// Extension point for the content-word selection used by pooled
/// embeddings. Implementations receive normalized text.
class TokenFilter {
 public:
  virtual ~TokenFilter() = default;
  virtual std::string filter_id() const = 0;
  virtual FilteredTokens select(std::string_view normalized) const = 0;
};

/// The default heuristic: basic tokenization + content_filter.
class StopwordFilter final : public TokenFilter {
 public:
  StopwordFilter();
  explicit StopwordFilter(std::shared_ptr<const StopwordList> stopwords,
                          std::string id = "stopword-v1");

  std::string filter_id() const override { return id_; }
  FilteredTokens select(std::string_view normalized) const override;

 private:
  std::shared_ptr<const StopwordList> stopwords_;
  std::string id_;
};

/// Keeps every token.
class KeepAllFilter final : public TokenFilter {
 public:
  std::string filter_id() const override { return "all"; }
  FilteredTokens select(std::string_view normalized) const override;
};

/// A part-of-speech tagger living outside the core. Returns its own
/// tokenization of the normalized text with one universal POS tag per token.
class TaggerAdapter {
 public:
  struct Tagged {
    std::vector<TokenSpan> tokens;
    std::vector<std::string> tags;
  };
  virtual ~TaggerAdapter() = default;
  virtual std::string tagger_id() const = 0;
  virtual Tagged tag(std::string_view normalized) const = 0;
};

/// Keeps tokens tagged NOUN or PROPN by an external tagger.
class PosTagFilter final : public TokenFilter {
 public:
  explicit PosTagFilter(std::shared_ptr<const TaggerAdapter> tagger);

  std::string filter_id() const override { return "pos:" + tagger_->tagger_id(); }
  FilteredTokens select(std::string_view normalized) const override;

 private:
  std::shared_ptr<const TaggerAdapter> tagger_;
};

}  // namespace crowdmatch
