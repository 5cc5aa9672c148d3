#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlorp/corpus.hpp"

namespace nlorp {

enum class PhraseKind : int { Unigram = 1, Bigram = 2, Trigram = 3 };

std::string_view to_string(PhraseKind kind);

/// Token positions [start, end) within the source token list.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool overlaps(const TokenSpan& other) const { return start < other.end && other.start < end; }
  bool operator==(const TokenSpan&) const = default;
};

struct Phrase {
  std::vector<std::string> tokens;
  PhraseKind kind = PhraseKind::Unigram;
  TokenSpan span;

  /// Canonical key text: tokens joined by a single space.
  std::string text() const { return join_tokens(tokens); }
  bool operator==(const Phrase&) const = default;
};

/// Builds the phrase covering tokens[start, start + length).
Phrase make_phrase(std::span<const std::string> tokens, std::size_t start, std::size_t length);

/// All unigrams, then bigrams, then trigrams, each group left to right.
std::vector<Phrase> extract_phrases(std::span<const std::string> tokens);

/// Only the phrases of one kind, left to right.
std::vector<Phrase> extract_phrases(std::span<const std::string> tokens, PhraseKind kind);

struct PhraseStats {
  std::uint64_t count = 0;
  double avg_open_rate = 0.0;

  bool operator==(const PhraseStats&) const = default;
};

using StopwordSet = std::set<std::string, std::less<>>;
using PhraseKey = std::pair<PhraseKind, std::string>;

/// Orders keys by kind, then text; accepts string_view keys for lookup.
struct PhraseKeyLess {
  using is_transparent = void;
  template <typename A, typename B>
  bool operator()(const A& a, const B& b) const {
    if (a.first != b.first) return a.first < b.first;
    return std::string_view(a.second) < std::string_view(b.second);
  }
};

using PhraseTable = std::map<PhraseKey, PhraseStats, PhraseKeyLess>;

/// The fixed English stopword list shipped with the library (list version 1).
const StopwordSet& default_stopwords();

/// Reads whitespace-separated stopwords; lines starting with '#' are ignored.
StopwordSet load_stopwords(const std::filesystem::path& path);

inline constexpr std::string_view kMappingHeader = "#nlorp-mapping v1";

/// Phrase -> historical average open rate. Immutable once built.
class MappingFile {
 public:
  MappingFile() = default;
  MappingFile(PhraseTable entries, StopwordSet stopwords);

  const PhraseStats* find(PhraseKind kind, std::string_view text) const;
  const PhraseTable& entries() const { return entries_; }
  const StopwordSet& stopwords() const { return stopwords_; }
  bool is_stopword(std::string_view token) const { return stopwords_.find(token) != stopwords_.end(); }
  std::size_t count(PhraseKind kind) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// 16 hex digits derived from the serialized content; stamps the model
  /// trained alongside this mapping.
  std::string build_id() const;

  bool operator==(const MappingFile&) const = default;

 private:
  PhraseTable entries_;
  StopwordSet stopwords_;
};

/// Averages each phrase's open rate over every occurrence in the corpus.
/// Unigrams listed in `stopwords` and entries seen fewer than `min_count`
/// times are dropped. Result does not depend on corpus order.
MappingFile build_mapping(std::span<const TokenizedRecord> corpus, const StopwordSet& stopwords,
                          std::uint64_t min_count = 1);

std::optional<double> lookup(const MappingFile& mapping, const Phrase& phrase);

std::string format_mapping(const MappingFile& mapping);
MappingFile parse_mapping(std::string_view text, std::string_view origin = "<memory>");
void persist_mapping(const MappingFile& mapping, const std::filesystem::path& path);
MappingFile load_mapping(const std::filesystem::path& path);

/// FNV-1a 64-bit; used for build stamps.
std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t value);

}  // namespace nlorp
