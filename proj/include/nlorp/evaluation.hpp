#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nlorp/corpus.hpp"
#include "nlorp/pipeline.hpp"

namespace nlorp {

struct PredictionPair {
  double actual = 0.0;
  double predicted = 0.0;
};

/// |actual - predicted|
double error(const PredictionPair& pair);

/// Fraction of pairs whose error is at most `cutoff` (inclusive).
double error_accuracy_at_c(std::span<const PredictionPair> pairs, double cutoff);

struct PercentError {
  double value = 0.0;
  std::size_t n_excluded_zero_actual = 0;
};

/// Mean of |actual - predicted| / actual over pairs with actual > 0.
PercentError average_percent_error(std::span<const PredictionPair> pairs);

/// Shuffles [0, n) with `seed` and deals it into k folds; the first n % k
/// folds hold one extra index.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

template <typename T>
std::vector<std::vector<T>> kfold_split(std::span<const T> records, std::size_t k, std::uint64_t seed) {
  std::vector<std::vector<T>> folds;
  for (const auto& indices : kfold_split(records.size(), k, seed)) {
    auto& fold = folds.emplace_back();
    fold.reserve(indices.size());
    for (std::size_t i : indices) fold.push_back(records[i]);
  }
  return folds;
}

struct GroupStats {
  double share = 0.0;
  std::optional<double> avg_percent_error;  // absent when the group has no pair with actual > 0
  std::size_t count = 0;
};

struct GroupReport {
  double cutoff = 0.1;
  GroupStats within;  // error <= cutoff
  GroupStats beyond;  // error > cutoff
  std::size_t n_excluded_zero_actual = 0;
};

GroupReport group_report(std::span<const PredictionPair> pairs, double cutoff);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double error_accuracy_at_c = 0.0;
  std::optional<double> average_percent_error;
  std::size_t n_excluded_zero_actual = 0;
  double lstm_initial_loss = 0.0;
  double lstm_final_loss = 0.0;
};

struct EvalReport {
  double cutoff = 0.1;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double error_accuracy_at_c = 0.0;                     // unweighted mean over folds
  std::optional<double> average_percent_error_overall;  // unweighted mean over folds that define it
  GroupReport groups;                                   // over pooled held-out pairs
  std::vector<FoldMetrics> per_fold;
  std::size_t n_total = 0;
  std::size_t n_excluded_zero_actual = 0;
  std::size_t n_skipped_empty = 0;  // held-out lines with no tokens
  std::vector<PredictionPair> pairs;
};

struct CrossValidationOptions {
  std::size_t folds = 5;
  double cutoff = 0.1;
  std::uint64_t seed = 1;
  TrainingConfig training;
  /// Number of folds trained concurrently; 0 picks the hardware concurrency.
  unsigned threads = 0;
};

/// Trains on k-1 folds and predicts the held-out fold, for every fold.
EvalReport cross_validate(std::span<const SubjectLineRecord> corpus, const CrossValidationOptions& options);

}  // namespace nlorp
