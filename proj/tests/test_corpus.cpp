#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "nlorp/corpus.hpp"
#include "nlorp/error.hpp"
#include "nlorp/rng.hpp"

using namespace nlorp;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected nlorp::Error";
  return ErrorKind::EmptyInput;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("nlorp_corpus_" + name);
}

}  // namespace

TEST(LoadCorpus, RatesSchemaRow) {
  auto records = parse_corpus("subject_line,open_rate\n\"Big summer sale\",0.25\n");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].text, "Big summer sale");
  EXPECT_EQ(records[0].open_rate, 0.25);
}

TEST(LoadCorpus, CountsSchemaConvertsOpensOverSends) {
  auto records = parse_corpus("subject_line,opens,sends\n\"Flash deal\",50,200\n");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].open_rate, 0.25);
}

TEST(LoadCorpus, RateAboveOneIsRejected) {
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\n\"Oops\",1.5\n"); }), ErrorKind::RateOutOfRange);
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\nOops,-0.1\n"); }), ErrorKind::RateOutOfRange);
}

TEST(LoadCorpus, ZeroSendsIsRejected) {
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,opens,sends\nx,0,0\n"); }), ErrorKind::RateOutOfRange);
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,opens,sends\nx,5,4\n"); }), ErrorKind::RateOutOfRange);
}

TEST(LoadCorpus, MalformedRows) {
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\nhello,0.1,3\n"); }), ErrorKind::MalformedRow);
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\nhello,abc\n"); }), ErrorKind::MalformedRow);
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\n\"   \",0.1\n"); }), ErrorKind::MalformedRow);
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\n\"open,0.1\n"); }), ErrorKind::MalformedRow);
  EXPECT_EQ(kind_of([] { parse_corpus("subject,rate\nhello,0.1\n"); }), ErrorKind::MalformedRow);
}

TEST(LoadCorpus, SchemaMismatchAgainstRequestedLayout) {
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\nhello,0.1\n", CsvSchema::Counts); }),
            ErrorKind::MalformedRow);
  EXPECT_NO_THROW(parse_corpus("subject_line,open_rate\nhello,0.1\n", CsvSchema::Rates));
}

TEST(LoadCorpus, EmptyCorpus) {
  EXPECT_EQ(kind_of([] { parse_corpus("subject_line,open_rate\n"); }), ErrorKind::EmptyCorpus);
  EXPECT_EQ(kind_of([] { parse_corpus(""); }), ErrorKind::EmptyCorpus);
}

TEST(LoadCorpus, QuotedFieldsAndOrder) {
  auto records = parse_corpus(
      "subject_line,open_rate\r\n"
      "\"Save, now\",0.1\r\n"
      "\"He said \"\"hi\"\"\",0.2\r\n"
      "\"two\nlines\",0.3\r\n"
      "plain,0\r\n");
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0].text, "Save, now");
  EXPECT_EQ(records[1].text, "He said \"hi\"");
  EXPECT_EQ(records[2].text, "two\nlines");
  EXPECT_EQ(records[3].text, "plain");
  EXPECT_EQ(records[3].open_rate, 0.0);
}

TEST(LoadCorpus, MissingFileIsIoFailure) {
  EXPECT_EQ(kind_of([] { load_corpus("/nonexistent/nlorp/corpus.csv"); }), ErrorKind::IoFailure);
}

TEST(LoadCorpus, SaveThenLoadIsIdentity) {
  // Random texts with separators, quotes and line breaks in them.
  Rng rng(42);
  const std::string alphabet = "abc ,\"\n%$-xyz\xC3\xA9";
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SubjectLineRecord> records;
    const std::size_t n = 1 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) {
      std::string text = "w";
      const std::size_t len = rng.index(12);
      for (std::size_t k = 0; k < len; ++k) text += alphabet[rng.index(alphabet.size())];
      records.push_back({text, rng.uniform()});
    }
    const auto path = temp_file("roundtrip.csv");
    save_corpus(records, path);
    const auto first = load_corpus(path);
    EXPECT_EQ(first, records);
    save_corpus(first, path);
    EXPECT_EQ(load_corpus(path), first);
  }
}

TEST(NormalizeText, MixedCaseLineWithDash) {
  EXPECT_EQ(normalize_text("Last chance - Great summer escapes."),
            (std::vector<std::string>{"last", "chance", "great", "summer", "escapes"}));
  // Same line with an en dash.
  EXPECT_EQ(normalize_text("Last chance \xE2\x80\x93 Great summer escapes."),
            (std::vector<std::string>{"last", "chance", "great", "summer", "escapes"}));
}

TEST(NormalizeText, KeepsPercentAndDollar) {
  EXPECT_EQ(normalize_text("Save up to 25%"), (std::vector<std::string>{"save", "up", "to", "25%"}));
  EXPECT_EQ(normalize_text("$50 OFF!"), (std::vector<std::string>{"$50", "off"}));
}

TEST(NormalizeText, PunctuationOnly) {
  EXPECT_TRUE(normalize_text("!!!").empty());
  EXPECT_TRUE(normalize_text("").empty());
  EXPECT_TRUE(normalize_text("  \t ... \xE2\x80\x9C\xE2\x80\x9D ").empty());
}

TEST(NormalizeText, UnicodeLettersAreLowercased) {
  EXPECT_EQ(normalize_text("CAF\xC3\x89 \xC2\xA1Ol\xC3\xA9!"), (std::vector<std::string>{"caf\xC3\xA9", "ol\xC3\xA9"}));
}

TEST(NormalizeText, IdempotentOnJoinedOutput) {
  Rng rng(3);
  const std::vector<std::string> pieces = {"A", "b", "Z", " ", "  ", "!", "%", "$", ".", "-", "\xE2\x80\x94", "\xC3\x89",
                                           "7", "'", "\t", "\xE2\x80\x99", "\xF0\x9F\x98\x80", "\xFF"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string raw;
    const std::size_t len = rng.index(30);
    for (std::size_t k = 0; k < len; ++k) raw += pieces[rng.index(pieces.size())];
    const auto once = normalize_text(raw);
    for (const auto& token : once) {
      EXPECT_FALSE(token.empty());
      EXPECT_EQ(token.find_first_of(" \t\n"), std::string::npos);
    }
    EXPECT_EQ(normalize_text(join_tokens(once)), once) << raw;
  }
}

TEST(SyntheticCorpus, DeterministicForSeed) {
  const auto a = generate_synthetic_corpus(1, 5, 20);
  const auto b = generate_synthetic_corpus(1, 5, 20);
  EXPECT_EQ(format_corpus(a.records), format_corpus(b.records));
  EXPECT_EQ(a.latent_scores, b.latent_scores);
  EXPECT_NE(format_corpus(generate_synthetic_corpus(2, 5, 20).records), format_corpus(a.records));
}

TEST(SyntheticCorpus, ShapeAndBounds) {
  const auto corpus = generate_synthetic_corpus(9, 300, 40);
  ASSERT_EQ(corpus.records.size(), 300u);
  EXPECT_EQ(corpus.latent_scores.size(), 40u);
  for (const auto& [word, score] : corpus.latent_scores) {
    EXPECT_GE(score, 0.05);
    EXPECT_LE(score, 0.5);
  }
  for (const auto& record : corpus.records) {
    EXPECT_GE(record.open_rate, 0.0);
    EXPECT_LE(record.open_rate, 1.0);
    const auto tokens = normalize_text(record.text);
    EXPECT_GE(tokens.size(), 4u);
    EXPECT_LE(tokens.size(), 8u);
  }
}

TEST(SyntheticCorpus, NoiselessRateIsMeanOfLatentScores) {
  const double scores[] = {0.1, 0.2, 0.3};
  EXPECT_NEAR(synthetic_open_rate(scores, 0.0, 0.013), 0.2, 1e-15);

  const auto corpus = generate_synthetic_corpus(4, 50, 15, 0.0);
  for (const auto& record : corpus.records) {
    double sum = 0.0;
    const auto tokens = normalize_text(record.text);
    for (const auto& t : tokens) sum += corpus.latent_scores.at(t);
    EXPECT_NEAR(record.open_rate, sum / static_cast<double>(tokens.size()), 1e-15);
  }
}

TEST(SyntheticCorpus, PreconditionsEnforced) {
  EXPECT_THROW(generate_synthetic_corpus(1, 0, 20), Error);
  EXPECT_THROW(generate_synthetic_corpus(1, 5, 9), Error);
}
