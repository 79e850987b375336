#include "crowdmatch/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "crowdmatch/error.hpp"
#include "crowdmatch/model.hpp"
#include "stopwords_en.inc"

namespace crowdmatch {

namespace {

bool is_word_char(UChar32 c) {
  return u_hasBinaryProperty(c, UCHAR_ALPHABETIC) || u_isdigit(c);
}

// Calls fn(code_point, byte_offset, byte_length) for each scalar value.
template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t begin = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    fn(c, static_cast<std::size_t>(begin), static_cast<std::size_t>(i - begin));
  }
}

}  // namespace

std::string normalize_text(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::Storage, std::string("ICU NFKC unavailable: ") + u_errorName(status));
  }
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfkc->normalize(source, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("normalization failed: ") + u_errorName(status));
  }
  normalized.toLower(icu::Locale::getRoot());
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::vector<TokenSpan> tokenize_normalized(std::string_view normalized) {
  std::vector<TokenSpan> tokens;
  std::size_t cp_index = 0;
  bool in_token = false;
  std::size_t byte_begin = 0;
  std::size_t cp_begin = 0;
  for_each_code_point(normalized, [&](UChar32 c, std::size_t byte_off, std::size_t) {
    const bool word = c >= 0 && is_word_char(c);
    if (word && !in_token) {
      in_token = true;
      byte_begin = byte_off;
      cp_begin = cp_index;
    } else if (!word && in_token) {
      in_token = false;
      tokens.push_back({std::string(normalized.substr(byte_begin, byte_off - byte_begin)),
                        cp_begin, cp_index});
    }
    ++cp_index;
  });
  if (in_token) {
    tokens.push_back({std::string(normalized.substr(byte_begin)), cp_begin, cp_index});
  }
  return tokens;
}

std::vector<TokenSpan> basic_tokenize(std::string_view text) {
  if (text.empty()) return {};
  return tokenize_normalized(normalize_text(text));
}

AlignmentMap align_tokens(const std::vector<TokenSpan>& a, const std::vector<TokenSpan>& b) {
  AlignmentMap mapping(a.size());
  std::size_t first = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (first < b.size() && b[first].end <= a[i].start) ++first;
    for (std::size_t j = first; j < b.size() && b[j].start < a[i].end; ++j) {
      if (std::max(a[i].start, b[j].start) < std::min(a[i].end, b[j].end)) {
        mapping[i].push_back(j);
      }
    }
  }
  return mapping;
}

const StopwordList& StopwordList::builtin() {
  static const StopwordList list = from_text(kBuiltinStopwords);
  return list;
}

StopwordList StopwordList::from_text(std::string_view text) {
  StopwordList list;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view word = trim(line);
    if (!word.empty()) list.words_.insert(normalize_text(word));
  }
  return list;
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Storage, "cannot read stopword list " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

bool StopwordList::contains(std::string_view token) const {
  return words_.contains(std::string(token));
}

std::vector<std::size_t> content_filter(const std::vector<TokenSpan>& tokens,
                                        const StopwordList& stopwords) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenSpan& t = tokens[i];
    if (t.end - t.start < 2) continue;
    if (stopwords.contains(t.text)) continue;
    bool numeric = true;
    for_each_code_point(t.text, [&](UChar32 c, std::size_t, std::size_t) {
      if (c < 0 || !u_isdigit(c)) numeric = false;
    });
    if (numeric) continue;
    kept.push_back(i);
  }
  return kept;
}

StopwordFilter::StopwordFilter()
    : StopwordFilter(std::shared_ptr<const StopwordList>(&StopwordList::builtin(),
                                                         [](const StopwordList*) {})) {}

StopwordFilter::StopwordFilter(std::shared_ptr<const StopwordList> stopwords, std::string id)
    : stopwords_(std::move(stopwords)), id_(std::move(id)) {}

FilteredTokens StopwordFilter::select(std::string_view normalized) const {
  FilteredTokens out;
  out.tokens = tokenize_normalized(normalized);
  out.kept = content_filter(out.tokens, *stopwords_);
  return out;
}

FilteredTokens KeepAllFilter::select(std::string_view normalized) const {
  FilteredTokens out;
  out.tokens = tokenize_normalized(normalized);
  out.kept.resize(out.tokens.size());
  for (std::size_t i = 0; i < out.kept.size(); ++i) out.kept[i] = i;
  return out;
}

PosTagFilter::PosTagFilter(std::shared_ptr<const TaggerAdapter> tagger)
    : tagger_(std::move(tagger)) {
  if (!tagger_) throw Error(ErrorCode::InvalidArgument, "PosTagFilter needs a tagger");
}

FilteredTokens PosTagFilter::select(std::string_view normalized) const {
  TaggerAdapter::Tagged tagged = tagger_->tag(normalized);
  if (tagged.tags.size() != tagged.tokens.size()) {
    throw Error(ErrorCode::BackendUnavailable, "tagger returned mismatched tag count");
  }
  FilteredTokens out;
  for (std::size_t i = 0; i < tagged.tokens.size(); ++i) {
    if (tagged.tags[i] == "NOUN" || tagged.tags[i] == "PROPN") out.kept.push_back(i);
  }
  out.tokens = std::move(tagged.tokens);
  return out;
}

}  // namespace crowdmatch
