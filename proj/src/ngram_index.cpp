#include "nlorp/ngram_index.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "nlorp/error.hpp"
#include "nlorp/text_format.hpp"

namespace nlorp {

std::string_view to_string(PhraseKind kind) {
  switch (kind) {
    case PhraseKind::Unigram: return "unigram";
    case PhraseKind::Bigram: return "bigram";
    case PhraseKind::Trigram: return "trigram";
  }
  return "unknown";
}

Phrase make_phrase(std::span<const std::string> tokens, std::size_t start, std::size_t length) {
  Phrase phrase;
  phrase.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                       tokens.begin() + static_cast<std::ptrdiff_t>(start + length));
  phrase.kind = static_cast<PhraseKind>(length);
  phrase.span = {start, start + length};
  return phrase;
}

std::vector<Phrase> extract_phrases(std::span<const std::string> tokens, PhraseKind kind) {
  const auto length = static_cast<std::size_t>(kind);
  std::vector<Phrase> phrases;
  if (tokens.size() < length) return phrases;
  phrases.reserve(tokens.size() - length + 1);
  for (std::size_t start = 0; start + length <= tokens.size(); ++start) {
    phrases.push_back(make_phrase(tokens, start, length));
  }
  return phrases;
}

std::vector<Phrase> extract_phrases(std::span<const std::string> tokens) {
  std::vector<Phrase> all;
  for (auto kind : {PhraseKind::Unigram, PhraseKind::Bigram, PhraseKind::Trigram}) {
    auto part = extract_phrases(tokens, kind);
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return all;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet kStopwords = {
      "a",       "about",  "above",   "after",  "again", "against", "all",     "am",     "an",
      "and",     "any",    "are",     "as",     "at",    "be",      "because", "been",   "before",
      "being",   "below",  "between", "both",   "but",   "by",      "can",     "could",  "did",
      "do",      "does",   "doing",   "down",   "during", "each",   "few",     "for",    "from",
      "further", "had",    "has",     "have",   "having", "he",     "her",     "here",   "hers",
      "herself", "him",    "himself", "his",    "how",   "i",       "if",      "in",     "into",
      "is",      "it",     "its",     "itself", "just",  "me",      "more",    "most",   "my",
      "myself",  "no",     "nor",     "not",    "of",    "off",     "on",      "once",   "only",
      "or",      "other",  "our",     "ours",   "ourselves", "out", "over",    "own",    "same",
      "she",     "should", "so",      "some",   "such",  "than",    "that",    "the",    "their",
      "theirs",  "them",   "themselves", "then", "there", "these",  "they",    "this",   "those",
      "through", "to",     "too",     "under",  "until", "up",      "very",    "was",    "we",
      "were",    "what",   "when",    "where",  "which", "while",   "who",     "whom",   "why",
      "will",    "with",   "would",   "you",    "your",  "yours",   "yourself", "yourselves",
  };
  return kStopwords;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open stopword file " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    for (auto& token : normalize_text(line)) words.insert(std::move(token));
  }
  return words;
}

MappingFile::MappingFile(PhraseTable entries, StopwordSet stopwords)
    : entries_(std::move(entries)), stopwords_(std::move(stopwords)) {}

const PhraseStats* MappingFile::find(PhraseKind kind, std::string_view text) const {
  auto it = entries_.find(std::pair<PhraseKind, std::string_view>(kind, text));
  return it == entries_.end() ? nullptr : &it->second;
}

std::size_t MappingFile::count(PhraseKind kind) const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                [kind](const auto& e) { return e.first.first == kind; }));
}

std::string MappingFile::build_id() const { return to_hex(fnv1a64(format_mapping(*this))); }

MappingFile build_mapping(std::span<const TokenizedRecord> corpus, const StopwordSet& stopwords,
                          std::uint64_t min_count) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot build a mapping from an empty corpus");
  min_count = std::max<std::uint64_t>(min_count, 1);

  // Rates are collected per phrase and summed in sorted order so the result
  // is bit-identical under any permutation of the corpus.
  std::map<PhraseKey, std::vector<double>, PhraseKeyLess> occurrences;
  for (const auto& record : corpus) {
    for (const auto& phrase : extract_phrases(record.tokens)) {
      if (phrase.kind == PhraseKind::Unigram && stopwords.contains(phrase.tokens.front())) continue;
      occurrences[{phrase.kind, phrase.text()}].push_back(record.open_rate);
    }
  }

  PhraseTable entries;
  for (auto& [key, rates] : occurrences) {
    if (rates.size() < min_count) continue;
    std::sort(rates.begin(), rates.end());
    double sum = 0.0;
    for (double r : rates) sum += r;
    const double mean = std::clamp(sum / static_cast<double>(rates.size()), rates.front(), rates.back());
    entries.emplace(key, PhraseStats{rates.size(), mean});
  }
  return MappingFile(std::move(entries), stopwords);
}

std::optional<double> lookup(const MappingFile& mapping, const Phrase& phrase) {
  if (const auto* stats = mapping.find(phrase.kind, phrase.text())) return stats->avg_open_rate;
  return std::nullopt;
}

std::string format_mapping(const MappingFile& mapping) {
  std::string out(kMappingHeader);
  out += "\n#stopwords";
  for (const auto& word : mapping.stopwords()) {
    out += ' ';
    out += word;
  }
  out += '\n';
  for (const auto& [key, stats] : mapping.entries()) {
    out += std::to_string(static_cast<int>(key.first));
    out += '\t';
    out += key.second;
    out += '\t';
    out += std::to_string(stats.count);
    out += '\t';
    out += format_double(stats.avg_open_rate);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    parts.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

}  // namespace

MappingFile parse_mapping(std::string_view text, std::string_view origin) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  auto fail = [&](std::size_t line_no, const std::string& what) {
    return Error(ErrorKind::CorruptEntry, std::string(origin) + ":" + std::to_string(line_no) + ": " + what);
  };

  if (lines.empty()) throw fail(1, "empty mapping file");
  if (lines[0] != kMappingHeader) {
    throw Error(ErrorKind::VersionMismatch,
                std::string(origin) + ": expected header '" + std::string(kMappingHeader) + "', got '" +
                    std::string(lines[0]) + "'");
  }
  if (lines.size() < 2) throw fail(2, "missing #stopwords line");
  constexpr std::string_view kStopTag = "#stopwords";
  if (lines[1].substr(0, kStopTag.size()) != kStopTag) throw fail(2, "missing #stopwords line");

  StopwordSet stopwords;
  for (auto word : split(lines[1].substr(kStopTag.size()), ' ')) {
    if (!word.empty()) stopwords.emplace(word);
  }

  PhraseTable entries;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto fields = split(lines[i], '\t');
    if (fields.size() != 4) throw fail(line_no, "expected 4 tab-separated fields");
    auto kind_value = parse_integer<int>(fields[0]);
    if (!kind_value || *kind_value < 1 || *kind_value > 3) throw fail(line_no, "kind must be 1, 2 or 3");
    const auto kind = static_cast<PhraseKind>(*kind_value);
    const std::string phrase(fields[1]);
    auto tokens = split(phrase, ' ');
    const bool tokens_ok = std::all_of(tokens.begin(), tokens.end(), [](auto t) { return !t.empty(); });
    if (!tokens_ok || tokens.size() != static_cast<std::size_t>(kind)) {
      throw fail(line_no, "phrase token count does not match kind");
    }
    auto count = parse_integer<std::uint64_t>(fields[2]);
    if (!count || *count < 1) throw fail(line_no, "count must be a positive integer");
    auto rate = parse_double(fields[3]);
    if (!rate || !(*rate >= 0.0 && *rate <= 1.0)) throw fail(line_no, "rate must lie in [0,1]");
    if (kind == PhraseKind::Unigram && stopwords.contains(phrase)) {
      throw fail(line_no, "stopword stored as unigram");
    }
    if (!entries.emplace(PhraseKey{kind, phrase}, PhraseStats{*count, *rate}).second) {
      throw fail(line_no, "duplicate phrase");
    }
  }
  return MappingFile(std::move(entries), std::move(stopwords));
}

void persist_mapping(const MappingFile& mapping, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << format_mapping(mapping);
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

MappingFile load_mapping(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_mapping(buffer.str(), path.string());
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

}  // namespace nlorp
