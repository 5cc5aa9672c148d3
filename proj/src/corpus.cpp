#include "nlorp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "nlorp/error.hpp"
#include "nlorp/rng.hpp"
#include "nlorp/text_format.hpp"
#include "nlorp/utf8.hpp"

namespace nlorp {

namespace {

constexpr std::string_view kRatesHeader = "subject_line,open_rate";
constexpr std::string_view kCountsHeader = "subject_line,opens,sends";

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC-4180 reader. Quoted fields may contain commas, doubled quotes and line
// breaks. A trailing '\r' before '\n' is tolerated.
std::vector<CsvRow> read_csv(std::string_view text, std::string_view origin) {
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool row_done = false;
    while (!row_done) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        ++i;
        bool closed = false;
        while (i < text.size()) {
          char c = text[i++];
          if (c == '"') {
            if (i < text.size() && text[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              closed = true;
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (!closed) {
          throw Error(ErrorKind::MalformedRow,
                      std::string(origin) + ":" + std::to_string(row.line) + ": unterminated quote");
        }
        if (i < text.size() && text[i] == '\r') ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\n') {
          throw Error(ErrorKind::MalformedRow,
                      std::string(origin) + ":" + std::to_string(line) + ": text after closing quote");
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n') field.push_back(text[i++]);
        if (!field.empty() && field.back() == '\r') field.pop_back();
      }
      row.fields.push_back(field);
      if (i >= text.size()) {
        row_done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        ++i;  // '\n'
        ++line;
        row_done = true;
      }
    }
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
  }
  return rows;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string where(std::string_view origin, std::size_t line) {
  return std::string(origin) + ":" + std::to_string(line);
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos || s.empty();
}

}  // namespace

std::vector<SubjectLineRecord> parse_corpus(std::string_view csv, CsvSchema schema,
                                            std::string_view origin) {
  if (csv.size() >= 3 && csv.substr(0, 3) == "\xEF\xBB\xBF") csv.remove_prefix(3);
  auto rows = read_csv(csv, origin);
  if (rows.empty()) throw Error(ErrorKind::EmptyCorpus, std::string(origin) + ": no header");

  std::string header;
  for (std::size_t f = 0; f < rows[0].fields.size(); ++f) {
    if (f) header += ',';
    header += rows[0].fields[f];
  }
  CsvSchema detected;
  if (header == kRatesHeader) {
    detected = CsvSchema::Rates;
  } else if (header == kCountsHeader) {
    detected = CsvSchema::Counts;
  } else {
    throw Error(ErrorKind::MalformedRow, where(origin, 1) + ": unrecognized header '" + header + "'");
  }
  if (schema != CsvSchema::Auto && schema != detected) {
    throw Error(ErrorKind::MalformedRow, where(origin, 1) + ": header does not match requested schema");
  }

  const std::size_t columns = detected == CsvSchema::Rates ? 2 : 3;
  std::vector<SubjectLineRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != columns) {
      throw Error(ErrorKind::MalformedRow, where(origin, row.line) + ": expected " + std::to_string(columns) +
                                               " columns, got " + std::to_string(row.fields.size()));
    }
    if (is_blank(row.fields[0])) {
      throw Error(ErrorKind::MalformedRow, where(origin, row.line) + ": empty subject line");
    }
    double rate = 0.0;
    if (detected == CsvSchema::Rates) {
      auto parsed = parse_double(row.fields[1]);
      if (!parsed) {
        throw Error(ErrorKind::MalformedRow, where(origin, row.line) + ": non-numeric open_rate '" +
                                                 row.fields[1] + "'");
      }
      rate = *parsed;
    } else {
      auto opens = parse_double(row.fields[1]);
      auto sends = parse_double(row.fields[2]);
      if (!opens || !sends) {
        throw Error(ErrorKind::MalformedRow, where(origin, row.line) + ": non-numeric opens/sends");
      }
      if (*sends <= 0.0 || *opens < 0.0) {
        throw Error(ErrorKind::RateOutOfRange, where(origin, row.line) + ": opens/sends out of range");
      }
      rate = *opens / *sends;
    }
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw Error(ErrorKind::RateOutOfRange,
                  where(origin, row.line) + ": open rate " + format_double(rate) + " outside [0,1]");
    }
    records.push_back({row.fields[0], rate});
  }
  if (records.empty()) throw Error(ErrorKind::EmptyCorpus, std::string(origin) + ": no data rows");
  return records;
}

std::vector<SubjectLineRecord> load_corpus(const std::filesystem::path& path, CsvSchema schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), schema, path.string());
}

std::string format_corpus(std::span<const SubjectLineRecord> records) {
  std::string out(kRatesHeader);
  out += '\n';
  for (const auto& record : records) {
    if (needs_quotes(record.text)) {
      out += '"';
      for (char c : record.text) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += record.text;
    }
    out += ',';
    out += format_double(record.open_rate);
    out += '\n';
  }
  return out;
}

void save_corpus(std::span<const SubjectLineRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << format_corpus(records);
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

bool is_space(char32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\v': case '\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punctuation(char32_t cp) {
  if (cp == '%' || cp == '$') return false;
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
           (cp >= 0x7B && cp <= 0x7E);
  }
  // Latin-1 punctuation and symbols; ordinal indicators, micro sign and
  // superscript/fraction digits are letters or numbers and stay.
  if (cp >= 0xA1 && cp <= 0xBF) {
    switch (cp) {
      case 0xAA: case 0xB2: case 0xB3: case 0xB5: case 0xB9: case 0xBA:
      case 0xBC: case 0xBD: case 0xBE:
        return false;
      default:
        return true;
    }
  }
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp >= 0x200B && cp <= 0x200F) return true;  // zero-width and direction marks
  if (cp >= 0x2010 && cp <= 0x2027) return true;  // dashes, quotes, bullets, ellipsis
  if (cp >= 0x2030 && cp <= 0x205E) return true;
  if (cp >= 0x2E00 && cp <= 0x2E7F) return true;
  if ((cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) || (cp >= 0x3014 && cp <= 0x301F)) {
    return true;
  }
  if (cp >= 0xFF01 && cp <= 0xFF0F && cp != 0xFF04 && cp != 0xFF05) return true;
  if (cp == 0xFEFF) return true;
  return false;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0x80) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x137 && cp % 2 == 0) return cp + 1;
  if (cp >= 0x139 && cp <= 0x148 && cp % 2 == 1) return cp + 1;
  if (cp >= 0x14A && cp <= 0x177 && cp % 2 == 0) return cp + 1;
  if (cp == 0x178) return 0xFF;
  if (cp == 0x179 || cp == 0x17B || cp == 0x17D) return cp + 1;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < raw.size()) {
    const char32_t cp = utf8::decode(raw, i);
    if (cp == utf8::kInvalid) continue;
    if (is_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (is_punctuation(cp) || cp < 0x20 || cp == 0x7F) continue;
    utf8::append(current, to_lower(cp));
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<TokenizedRecord> tokenize_corpus(std::span<const SubjectLineRecord> records) {
  std::vector<TokenizedRecord> out;
  out.reserve(records.size());
  for (const auto& record : records) out.push_back({normalize_text(record.text), record.open_rate});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

double synthetic_open_rate(std::span<const double> word_scores, double noise, double noise_draw) {
  double sum = 0.0;
  for (double s : word_scores) sum += s;
  const double mean = word_scores.empty() ? 0.0 : sum / static_cast<double>(word_scores.size());
  return std::clamp(mean + noise * noise_draw, 0.0, 1.0);
}

SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n, std::size_t vocab_size,
                                          double noise) {
  if (n < 1) throw Error(ErrorKind::EmptyCorpus, "synthetic corpus needs n >= 1");
  if (vocab_size < 10) throw Error(ErrorKind::EmptyCorpus, "synthetic corpus needs vocab_size >= 10");

  Rng rng(seed);
  static constexpr std::string_view kConsonants = "bcdfghklmnprstvwz";
  static constexpr std::string_view kVowels = "aeiou";

  // Pronounceable words so the character-level model has structure to use.
  std::vector<std::string> words;
  std::set<std::string> seen;
  while (words.size() < vocab_size) {
    const std::size_t syllables = 1 + rng.index(3);
    std::string word;
    for (std::size_t s = 0; s < syllables; ++s) {
      word += kConsonants[rng.index(kConsonants.size())];
      word += kVowels[rng.index(kVowels.size())];
    }
    if (rng.index(2) == 0) word += kConsonants[rng.index(kConsonants.size())];
    if (seen.insert(word).second) words.push_back(std::move(word));
  }

  SyntheticCorpus corpus;
  std::vector<double> scores(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    scores[w] = rng.uniform(0.05, 0.5);
    corpus.latent_scores.emplace(words[w], scores[w]);
  }

  corpus.records.reserve(n);
  std::vector<double> line_scores;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t length = 4 + rng.index(5);
    std::string text;
    line_scores.clear();
    for (std::size_t k = 0; k < length; ++k) {
      const std::size_t w = rng.index(words.size());
      if (k) text += ' ';
      text += words[w];
      line_scores.push_back(scores[w]);
    }
    const double draw = rng.uniform(-0.02, 0.02);
    corpus.records.push_back({std::move(text), synthetic_open_rate(line_scores, noise, draw)});
  }
  return corpus;
}

}  // namespace nlorp
