#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nlorp {

/// One historical subject line and the fraction of recipients who opened it.
struct SubjectLineRecord {
  std::string text;
  double open_rate = 0.0;

  bool operator==(const SubjectLineRecord&) const = default;
};

/// A subject line after normalization; tokens are lowercase and whitespace-free.
struct TokenizedRecord {
  std::vector<std::string> tokens;
  double open_rate = 0.0;
};

/// CSV layouts accepted by load_corpus.
///   Rates:  `subject_line,open_rate`
///   Counts: `subject_line,opens,sends` (open_rate = opens / sends)
/// Auto picks the layout from the header line.
enum class CsvSchema { Auto, Rates, Counts };

std::vector<SubjectLineRecord> load_corpus(const std::filesystem::path& path,
                                           CsvSchema schema = CsvSchema::Auto);

/// Parses CSV text; `origin` only labels error messages.
std::vector<SubjectLineRecord> parse_corpus(std::string_view csv, CsvSchema schema = CsvSchema::Auto,
                                            std::string_view origin = "<memory>");

/// Writes the Rates layout with RFC-4180 quoting and round-trip exact rates.
void save_corpus(std::span<const SubjectLineRecord> records, const std::filesystem::path& path);
std::string format_corpus(std::span<const SubjectLineRecord> records);

/// Lowercases, strips punctuation other than `%` and `$`, and splits on
/// whitespace. Input is UTF-8; malformed byte sequences are dropped.
std::vector<std::string> normalize_text(std::string_view raw);

std::vector<TokenizedRecord> tokenize_corpus(std::span<const SubjectLineRecord> records);

std::string join_tokens(std::span<const std::string> tokens);

struct SyntheticCorpus {
  std::vector<SubjectLineRecord> records;
  std::map<std::string, double> latent_scores;  // word -> s_w
};

/// Deterministic corpus where each line's rate is the mean latent score of
/// its 4-8 words plus `noise * U(-0.02, 0.02)`, clamped to [0, 1].
SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n, std::size_t vocab_size,
                                          double noise = 1.0);

/// The rate rule used by the generator, exposed for oracle tests.
double synthetic_open_rate(std::span<const double> word_scores, double noise, double noise_draw);

}  // namespace nlorp
