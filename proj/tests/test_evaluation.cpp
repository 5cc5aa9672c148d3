#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "nlorp/error.hpp"
#include "nlorp/evaluation.hpp"
#include "nlorp/json_io.hpp"

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

TrainingConfig fast_training() {
  TrainingConfig config;
  config.lstm.embed_dim = 4;
  config.lstm.hidden_dim = 6;
  config.lstm.epochs = 1;
  return config;
}

// Four lines with disjoint vocabularies, each repeated ten times.
std::vector<SubjectLineRecord> memorizable_corpus() {
  const std::vector<SubjectLineRecord> base = {{"Flash sale today only", 0.31},
                                               {"Your weekly digest", 0.12},
                                               {"Big summer escapes await", 0.47},
                                               {"Save 25% now", 0.05}};
  std::vector<SubjectLineRecord> out;
  for (int copy = 0; copy < 10; ++copy) out.insert(out.end(), base.begin(), base.end());
  return out;
}

}  // namespace

TEST(Metrics, ErrorIsAbsoluteDifference) {
  EXPECT_NEAR(error({0.3, 0.1}), 0.2, 1e-15);
  EXPECT_EQ(error({0.4, 0.4}), 0.0);
  EXPECT_EQ(error({0.0, 1.0}), 1.0);
}

TEST(Metrics, ErrorAccuracyIsInclusive) {
  const std::vector<PredictionPair> pairs = {{0.5, 0.45}, {0.5, 0.375}, {0.5, 0.3}};
  EXPECT_NEAR(error_accuracy_at_c(pairs, 0.125), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(error_accuracy_at_c(pairs, 1.0), 1.0);
  EXPECT_THROW(error_accuracy_at_c(std::span<const PredictionPair>{}, 0.1), Error);
}

TEST(Metrics, ErrorAccuracyWorkedExample) {
  // Errors 0.05, 0.10 and 0.20 as written; 0.10 sits on the cutoff.
  const std::vector<PredictionPair> pairs = {{0.15, 0.1}, {0.2, 0.1}, {0.3, 0.1}};
  ASSERT_EQ(error(pairs[1]), 0.1);
  EXPECT_NEAR(error_accuracy_at_c(pairs, 0.1), 2.0 / 3.0, 1e-15);
}

TEST(Metrics, AveragePercentError) {
  const std::vector<PredictionPair> pairs = {{0.2, 0.1}, {0.4, 0.5}};
  EXPECT_NEAR(average_percent_error(pairs).value, 0.375, 1e-15);

  const std::vector<PredictionPair> perfect = {{0.2, 0.2}, {0.7, 0.7}};
  EXPECT_EQ(average_percent_error(perfect).value, 0.0);

  const std::vector<PredictionPair> mixed = {{0.0, 0.3}, {0.5, 0.25}};
  const auto pe = average_percent_error(mixed);
  EXPECT_NEAR(pe.value, 0.5, 1e-15);
  EXPECT_EQ(pe.n_excluded_zero_actual, 1u);

  const std::vector<PredictionPair> zeros = {{0.0, 0.1}};
  EXPECT_EQ(kind_of([&] { average_percent_error(zeros); }), ErrorKind::AllZeroActuals);
}

TEST(KFold, SizesFollowTheRemainderRule) {
  auto sizes = [](std::size_t n, std::size_t k) {
    std::vector<std::size_t> out;
    for (const auto& f : kfold_split(n, k, 3)) out.push_back(f.size());
    return out;
  };
  EXPECT_EQ(sizes(10, 5), (std::vector<std::size_t>{2, 2, 2, 2, 2}));
  EXPECT_EQ(sizes(11, 5), (std::vector<std::size_t>{3, 2, 2, 2, 2}));
  EXPECT_EQ(kind_of([] { kfold_split(4, 5, 1); }), ErrorKind::TooFewRecords);
  EXPECT_THROW(kfold_split(10, 1, 1), Error);
}

TEST(KFold, FoldsPartitionTheIndices) {
  for (std::size_t n = 2; n <= 40; n += 3) {
    for (std::size_t k = 2; k <= std::min<std::size_t>(n, 7); ++k) {
      const auto folds = kfold_split(n, k, n * 31 + k);
      std::vector<std::size_t> all;
      std::size_t smallest = n, largest = 0;
      for (const auto& f : folds) {
        all.insert(all.end(), f.begin(), f.end());
        smallest = std::min(smallest, f.size());
        largest = std::max(largest, f.size());
      }
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expected(n);
      std::iota(expected.begin(), expected.end(), 0);
      EXPECT_EQ(all, expected);
      EXPECT_LE(largest - smallest, 1u);
    }
  }
  EXPECT_EQ(kfold_split(30, 5, 9), kfold_split(30, 5, 9));
  EXPECT_NE(kfold_split(30, 5, 9), kfold_split(30, 5, 10));
}

TEST(KFold, RecordTemplateFollowsIndexSplit) {
  std::vector<int> records(11);
  std::iota(records.begin(), records.end(), 100);
  const auto folds = kfold_split(std::span<const int>(records), 5, 4);
  const auto indices = kfold_split(11, 5, 4);
  for (std::size_t f = 0; f < 5; ++f) {
    for (std::size_t i = 0; i < indices[f].size(); ++i) EXPECT_EQ(folds[f][i], 100 + static_cast<int>(indices[f][i]));
  }
}

TEST(GroupReport, SplitsAtTheCutoff) {
  const std::vector<PredictionPair> pairs = {{0.5, 0.45}, {0.5, 0.3}};
  const auto report = group_report(pairs, 0.1);
  EXPECT_EQ(report.within.share, 0.5);
  EXPECT_EQ(report.beyond.share, 0.5);
  EXPECT_EQ(report.within.count, 1u);
  EXPECT_NEAR(*report.within.avg_percent_error, 0.1, 1e-15);
  EXPECT_NEAR(*report.beyond.avg_percent_error, 0.4, 1e-15);
}

TEST(GroupReport, EmptyGroupHasNoPercentError) {
  const std::vector<PredictionPair> pairs = {{0.2, 0.21}, {0.6, 0.58}};
  const auto report = group_report(pairs, 0.1);
  EXPECT_EQ(report.within.share, 1.0);
  EXPECT_EQ(report.beyond.share, 0.0);
  EXPECT_EQ(report.beyond.count, 0u);
  EXPECT_FALSE(report.beyond.avg_percent_error.has_value());
}

TEST(CrossValidate, MemorizableCorpusScoresPerfectly) {
  const auto corpus = memorizable_corpus();
  CrossValidationOptions options;
  options.training = fast_training();
  options.cutoff = 1e-9;
  const auto report = cross_validate(corpus, options);
  EXPECT_EQ(report.error_accuracy_at_c, 1.0);
  EXPECT_EQ(report.per_fold.size(), 5u);
  EXPECT_EQ(report.n_total, corpus.size());
  EXPECT_EQ(report.groups.within.share, 1.0);
  std::size_t tested = 0;
  for (const auto& fold : report.per_fold) {
    tested += fold.n_test;
    EXPECT_EQ(fold.n_train + fold.n_test, corpus.size());
  }
  EXPECT_EQ(tested, corpus.size());
}

TEST(CrossValidate, SameSeedSameReport) {
  auto corpus = memorizable_corpus();
  corpus.push_back({"Completely unseen words here", 0.2});
  corpus.push_back({"!!!", 0.3});
  CrossValidationOptions options;
  options.training = fast_training();
  options.seed = 12;
  const auto a = report_to_json(cross_validate(corpus, options));
  options.threads = 1;
  const auto b = report_to_json(cross_validate(corpus, options));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["n_skipped_empty"], 1);
}

TEST(CrossValidate, TooFewRecordsForFolds) {
  const std::vector<SubjectLineRecord> corpus = {{"a b", 0.1}, {"c d", 0.2}, {"e f", 0.3}};
  CrossValidationOptions options;
  options.training = fast_training();
  EXPECT_EQ(kind_of([&] { cross_validate(corpus, options); }), ErrorKind::TooFewRecords);
}
