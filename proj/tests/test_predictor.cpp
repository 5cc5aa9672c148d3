#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "nlorp/error.hpp"
#include "nlorp/predictor.hpp"
#include "oracles.hpp"

using namespace nlorp;

namespace {

struct Row {
  int kind;
  std::string text;
  double rate;
};

MappingFile mapping_from(const std::vector<Row>& rows, const std::string& stopwords = "") {
  std::ostringstream out;
  out << "#nlorp-mapping v1\n#stopwords" << (stopwords.empty() ? "" : " " + stopwords) << "\n";
  for (const auto& r : rows) out << r.kind << '\t' << r.text << '\t' << 1 << '\t' << r.rate << '\n';
  return parse_mapping(out.str());
}

LstmModel model_for(const MappingFile& mapping, std::uint64_t seed = 17) {
  LstmHyperparams hp;
  hp.embed_dim = 6;
  hp.hidden_dim = 8;
  hp.seed = seed;
  auto model = make_model<double>(hp);
  model.build_id = mapping.build_id();
  return model;
}

PredictorHandle handle_for(const MappingFile& mapping, PredictorConfig config = {}) {
  return PredictorHandle(mapping, model_for(mapping), config);
}

TrigramScore unit(std::size_t start, std::size_t end, double rate, const std::string& word = "w") {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < end; ++i) tokens.push_back(word + std::to_string(i));
  TrigramScore s;
  s.trigram = make_phrase(tokens, start, end - start);
  s.rate = rate;
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> spans(const std::vector<TrigramScore>& picked) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& s : picked) out.emplace_back(s.trigram.span.start, s.trigram.span.end);
  return out;
}

}  // namespace

TEST(PhraseRate, MappingHitMissAndZeroRate) {
  const auto mapping = mapping_from({{1, "big", 0.3}, {1, "dead", 0.0}});
  const auto handle = handle_for(mapping);
  const std::vector<std::string> tokens = {"big", "dead", "unseen"};

  const auto hit = phrase_rate(handle, make_phrase(tokens, 0, 1));
  EXPECT_EQ(hit.rate, 0.3);
  EXPECT_EQ(hit.source, RateSource::Mapping);

  const auto zero = phrase_rate(handle, make_phrase(tokens, 1, 1));
  EXPECT_EQ(zero.rate, 0.0);
  EXPECT_EQ(zero.source, RateSource::Mapping);

  const auto miss = phrase_rate(handle, make_phrase(tokens, 2, 1));
  EXPECT_EQ(miss.source, RateSource::Lstm);
  EXPECT_EQ(miss.rate, predict_phrase(handle.model(), "unseen"));
  EXPECT_GT(miss.rate, 0.0);
  EXPECT_LT(miss.rate, 1.0);
}

TEST(TrigramScore, GroupMeanOfComponents) {
  const auto mapping = mapping_from({{3, "a b c", 0.30},
                                     {2, "a b", 0.20},
                                     {2, "b c", 0.40},
                                     {1, "a", 0.10},
                                     {1, "b", 0.20},
                                     {1, "c", 0.60}});
  const auto handle = handle_for(mapping);
  const std::vector<std::string> tokens = {"a", "b", "c"};
  const auto score = trigram_score(handle, make_phrase(tokens, 0, 3));
  EXPECT_NEAR(score.rate, 0.30, 1e-15);
  ASSERT_TRUE(score.trigram_component.has_value());
  EXPECT_EQ(score.bigram_components.size(), 2u);
  EXPECT_EQ(score.unigram_components.size(), 3u);
  for (const auto& c : score.bigram_components) EXPECT_EQ(c.source, RateSource::Mapping);
}

TEST(TrigramScore, StopwordUnigramsDropTheirGroup) {
  const auto mapping = mapping_from({{3, "up to a", 0.2}, {2, "up to", 0.3}, {2, "to a", 0.5}}, "a to up");
  const auto handle = handle_for(mapping);
  const std::vector<std::string> tokens = {"up", "to", "a"};
  const auto score = trigram_score(handle, make_phrase(tokens, 0, 3));
  EXPECT_TRUE(score.unigram_components.empty());
  EXPECT_NEAR(score.rate, 0.3, 1e-15);
}

TEST(TrigramScore, ConstantComponentsGiveThatConstant) {
  for (double r : {0.0, 0.125, 0.37, 1.0}) {
    const auto mapping = mapping_from(
        {{3, "x y z", r}, {2, "x y", r}, {2, "y z", r}, {1, "x", r}, {1, "y", r}, {1, "z", r}});
    const auto handle = handle_for(mapping);
    const std::vector<std::string> tokens = {"x", "y", "z"};
    EXPECT_NEAR(trigram_score(handle, make_phrase(tokens, 0, 3)).rate, r, 1e-15);
  }
}

TEST(TrigramScore, ComponentSpansAreAbsolute) {
  const auto mapping = mapping_from({{1, "q", 0.5}});
  const auto handle = handle_for(mapping);
  const std::vector<std::string> tokens = {"p", "q", "r", "s", "t"};
  const auto score = trigram_score(handle, make_phrase(tokens, 2, 3));
  EXPECT_EQ(score.bigram_components[0].phrase.span, (TokenSpan{2, 4}));
  EXPECT_EQ(score.bigram_components[1].phrase.span, (TokenSpan{3, 5}));
  EXPECT_EQ(score.unigram_components[2].phrase.span, (TokenSpan{4, 5}));
  EXPECT_THROW(trigram_score(handle, make_phrase(tokens, 0, 2)), Error);
}

TEST(Aggregation, FlatMeanAveragesEveryComponent) {
  const double bigrams[] = {0.2, 0.4};
  const double unigrams[] = {0.1, 0.2, 0.6};
  EXPECT_NEAR(aggregate_components(Aggregation::FlatMean, 0.3, bigrams, unigrams), 1.8 / 6.0, 1e-15);
  EXPECT_NEAR(aggregate_components(Aggregation::GroupMean, 0.3, bigrams, unigrams), 0.3, 1e-15);
  EXPECT_NEAR(aggregate_components(Aggregation::GroupMean, std::nullopt, bigrams, {}), 0.3, 1e-15);
}

TEST(Selection, GreedySkipsOverlaps) {
  const std::vector<TrigramScore> scores = {unit(0, 3, 0.5), unit(1, 4, 0.4), unit(3, 6, 0.3)};
  EXPECT_EQ(spans(select_top_nonoverlapping(scores)),
            (std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}}));
}

TEST(Selection, SingleUnitAndCap) {
  const std::vector<TrigramScore> one = {unit(0, 3, 0.2)};
  EXPECT_EQ(select_top_nonoverlapping(one).size(), 1u);

  std::vector<TrigramScore> seven;
  for (std::size_t i = 0; i < 7; ++i) seven.push_back(unit(3 * i, 3 * i + 3, 0.1 * static_cast<double>(i + 1)));
  const auto picked = select_top_nonoverlapping(seven, 5);
  ASSERT_EQ(picked.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(picked[i].rate, 0.1 * static_cast<double>(7 - i), 1e-15);
}

TEST(Selection, TiesGoToSmallerStartThenText) {
  const std::vector<TrigramScore> tied = {unit(3, 6, 0.4), unit(0, 3, 0.4), unit(1, 4, 0.4)};
  EXPECT_EQ(spans(select_top_nonoverlapping(tied)),
            (std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}}));

  const std::vector<TrigramScore> same_start = {unit(0, 3, 0.4, "b"), unit(0, 3, 0.4, "a")};
  const auto picked = select_top_nonoverlapping(same_start);
  ASSERT_EQ(picked.size(), 1u);
  EXPECT_EQ(picked[0].trigram.tokens[0], "a0");
}

TEST(Selection, RaisingASelectedRateKeepsIt) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TrigramScore> scores;
    const std::size_t n = 3 + rng.index(10);
    for (std::size_t s = 0; s + 3 <= n; ++s) scores.push_back(unit(s, s + 3, rng.uniform()));
    const auto before = select_top_nonoverlapping(scores);
    const std::size_t target = rng.index(scores.size());
    const bool was_selected = std::any_of(before.begin(), before.end(), [&](const auto& p) {
      return p.trigram.span == scores[target].trigram.span;
    });
    if (!was_selected) continue;
    scores[target].rate = std::min(1.0, scores[target].rate + rng.uniform(0.0, 0.5));
    const auto after = select_top_nonoverlapping(scores);
    EXPECT_TRUE(std::any_of(after.begin(), after.end(),
                            [&](const auto& p) { return p.trigram.span == scores[target].trigram.span; }));
  }
}

TEST(FinalOpenRate, MeanOfThreeRates) {
  const double rates[] = {0.17, 0.13, 0.18};
  EXPECT_NEAR(final_open_rate(rates), 0.16, 1e-12);
  EXPECT_THROW(final_open_rate(std::span<const double>{}), Error);
}

TEST(Predict, FullyCoveredLineNeverUsesTheModel) {
  const double r = 0.23;
  std::vector<Row> rows;
  const std::vector<std::string> words = {"last", "chance", "great", "summer", "escapes"};
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t s = 0; s + n <= words.size(); ++s) {
      rows.push_back({static_cast<int>(n), oracle::join(words, s, n), r});
    }
  }
  const auto handle = handle_for(mapping_from(rows));
  const auto prediction = predict(handle, "Last chance - Great summer escapes.");
  EXPECT_NEAR(prediction.open_rate, r, 1e-12);
  for (const auto& unit : prediction.selected) {
    EXPECT_EQ(unit.trigram_component->source, RateSource::Mapping);
    for (const auto& c : unit.bigram_components) EXPECT_EQ(c.source, RateSource::Mapping);
    for (const auto& c : unit.unigram_components) EXPECT_EQ(c.source, RateSource::Mapping);
  }
}

TEST(Predict, ShortInputs) {
  const auto mapping = mapping_from({{2, "big sale", 0.4}, {1, "big", 0.2}, {1, "sale", 0.3}, {2, "the sale", 0.1}},
                                    "the");
  const auto handle = handle_for(mapping);

  const auto two = predict(handle, "Big sale!");
  ASSERT_EQ(two.selected.size(), 1u);
  EXPECT_FALSE(two.selected[0].trigram_component.has_value());
  EXPECT_NEAR(two.open_rate, (0.4 + 0.25) / 2.0, 1e-15);

  const auto with_stopword = predict(handle, "the sale");
  EXPECT_NEAR(with_stopword.open_rate, (0.1 + 0.3) / 2.0, 1e-15);

  EXPECT_EQ(predict(handle, "sale").open_rate, 0.3);

  const auto lone_stopword = predict(handle, "The");
  ASSERT_EQ(lone_stopword.selected[0].unigram_components.size(), 1u);
  EXPECT_EQ(lone_stopword.selected[0].unigram_components[0].source, RateSource::Lstm);
  EXPECT_EQ(lone_stopword.open_rate, predict_phrase(handle.model(), "the"));
}

TEST(Predict, EmptySubjectLine) {
  const auto handle = handle_for(mapping_from({{1, "x", 0.1}}));
  try {
    predict(handle, "!!! ...");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySubjectLine);
  }
}

TEST(PredictorHandle, RejectsMismatchedArtifacts) {
  const auto mapping = mapping_from({{1, "x", 0.1}});
  auto model = model_for(mapping);
  model.build_id = "ffffffffffffffff";
  try {
    PredictorHandle handle(mapping, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BuildMismatch);
  }
}

TEST(Predict, InvariantsAndOracleAgreementOnRandomCorpora) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto records = oracle::random_corpus(seed, 5 + seed % 46);
    const auto corpus = tokenize_corpus(records);
    const auto& stop = default_stopwords();
    const auto mapping = build_mapping(corpus, stop);
    const auto handle = handle_for(mapping);

    const auto probes = oracle::random_corpus(seed + 1000, 20);
    for (const auto& probe : probes) {
      const auto tokens = normalize_text(probe.text);
      if (tokens.empty()) continue;
      const auto prediction = predict_tokens(handle, tokens);

      EXPECT_GE(prediction.open_rate, 0.0);
      EXPECT_LE(prediction.open_rate, 1.0);
      EXPECT_LE(prediction.selected.size(), 5u);
      double sum = 0.0;
      for (std::size_t i = 0; i < prediction.selected.size(); ++i) {
        sum += prediction.selected[i].rate;
        for (std::size_t j = i + 1; j < prediction.selected.size(); ++j) {
          EXPECT_FALSE(prediction.selected[i].trigram.span.overlaps(prediction.selected[j].trigram.span));
        }
      }
      EXPECT_NEAR(prediction.open_rate, sum / static_cast<double>(prediction.selected.size()), 1e-12);

      const auto reference = oracle::predict(corpus, stop, handle.model(), tokens);
      EXPECT_NEAR(prediction.open_rate, reference.open_rate, 1e-9) << probe.text;
      ASSERT_EQ(prediction.selected.size(), reference.selected.size());
      for (std::size_t i = 0; i < reference.selected.size(); ++i) {
        EXPECT_EQ(prediction.selected[i].trigram.span.start, reference.selected[i].start);
        EXPECT_EQ(prediction.selected[i].trigram.text(), reference.selected[i].text);
      }
    }
  }
}
