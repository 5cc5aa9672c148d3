#include "nlorp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "nlorp/error.hpp"
#include "nlorp/rng.hpp"

namespace nlorp {

double error(const PredictionPair& pair) { return std::abs(pair.actual - pair.predicted); }

double error_accuracy_at_c(std::span<const PredictionPair> pairs, double cutoff) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyInput, "error_accuracy_at_c needs at least one pair");
  const auto within = std::count_if(pairs.begin(), pairs.end(), [&](const auto& p) { return error(p) <= cutoff; });
  return static_cast<double>(within) / static_cast<double>(pairs.size());
}

PercentError average_percent_error(std::span<const PredictionPair> pairs) {
  PercentError out;
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& p : pairs) {
    if (p.actual > 0.0) {
      sum += error(p) / p.actual;
      ++used;
    } else {
      ++out.n_excluded_zero_actual;
    }
  }
  if (used == 0) throw Error(ErrorKind::AllZeroActuals, "no pair has a positive actual open rate");
  out.value = sum / static_cast<double>(used);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::TooFewRecords, "cross validation needs at least 2 folds");
  if (n < k) {
    throw Error(ErrorKind::TooFewRecords,
                std::to_string(n) + " records cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(next),
                    order.begin() + static_cast<std::ptrdiff_t>(next + size));
    next += size;
  }
  return folds;
}

GroupReport group_report(std::span<const PredictionPair> pairs, double cutoff) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyInput, "group_report needs at least one pair");
  GroupReport report;
  report.cutoff = cutoff;
  std::vector<PredictionPair> within, beyond;
  for (const auto& p : pairs) (error(p) <= cutoff ? within : beyond).push_back(p);

  auto fill = [&](GroupStats& stats, const std::vector<PredictionPair>& group) {
    stats.count = group.size();
    stats.share = static_cast<double>(group.size()) / static_cast<double>(pairs.size());
    const bool any_positive = std::any_of(group.begin(), group.end(), [](const auto& p) { return p.actual > 0.0; });
    if (any_positive) {
      auto pe = average_percent_error(group);
      stats.avg_percent_error = pe.value;
    }
    report.n_excluded_zero_actual +=
        static_cast<std::size_t>(std::count_if(group.begin(), group.end(), [](const auto& p) { return !(p.actual > 0.0); }));
  };
  fill(report.within, within);
  fill(report.beyond, beyond);
  return report;
}

namespace {

struct FoldOutcome {
  FoldMetrics metrics;
  std::vector<PredictionPair> pairs;
  std::size_t skipped_empty = 0;
};

FoldOutcome run_fold(std::span<const SubjectLineRecord> corpus, const std::vector<std::vector<std::size_t>>& folds,
                     std::size_t held_out, const CrossValidationOptions& options) {
  std::vector<SubjectLineRecord> train;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f == held_out) continue;
    for (std::size_t i : folds[f]) train.push_back(corpus[i]);
  }
  auto artifacts = train_artifacts(train, options.training);
  FoldOutcome out;
  out.metrics.fold = held_out;
  out.metrics.n_train = train.size();
  out.metrics.lstm_initial_loss = artifacts.log.initial_loss;
  out.metrics.lstm_final_loss =
      artifacts.log.epoch_losses.empty() ? artifacts.log.initial_loss : artifacts.log.epoch_losses.back();

  const PredictorHandle handle(std::move(artifacts.mapping), std::move(artifacts.model), options.training.predictor);
  for (std::size_t i : folds[held_out]) {
    const auto tokens = normalize_text(corpus[i].text);
    if (tokens.empty()) {
      ++out.skipped_empty;
      continue;
    }
    const auto prediction = predict_tokens(handle, tokens);
    out.pairs.push_back({corpus[i].open_rate, prediction.open_rate});
  }
  out.metrics.n_test = out.pairs.size();
  if (!out.pairs.empty()) {
    out.metrics.error_accuracy_at_c = error_accuracy_at_c(out.pairs, options.cutoff);
    const bool any_positive =
        std::any_of(out.pairs.begin(), out.pairs.end(), [](const auto& p) { return p.actual > 0.0; });
    if (any_positive) {
      const auto pe = average_percent_error(out.pairs);
      out.metrics.average_percent_error = pe.value;
      out.metrics.n_excluded_zero_actual = pe.n_excluded_zero_actual;
    } else {
      out.metrics.n_excluded_zero_actual = out.pairs.size();
    }
  }
  return out;
}

}  // namespace

EvalReport cross_validate(std::span<const SubjectLineRecord> corpus, const CrossValidationOptions& options) {
  if (!(options.cutoff > 0.0)) throw Error(ErrorKind::EmptyInput, "cutoff must be > 0");
  const auto folds = kfold_split(corpus.size(), options.folds, options.seed);

  std::vector<FoldOutcome> outcomes(folds.size());
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(folds.size()));
  if (threads <= 1) {
    for (std::size_t f = 0; f < folds.size(); ++f) outcomes[f] = run_fold(corpus, folds, f, options);
  } else {
    // Folds are independent; results land in fixed slots so the report does
    // not depend on scheduling.
    std::vector<std::exception_ptr> failures(folds.size());
    std::size_t next = 0;
    std::mutex lock;
    auto worker = [&] {
      while (true) {
        std::size_t f;
        {
          std::lock_guard guard(lock);
          if (next >= folds.size()) return;
          f = next++;
        }
        try {
          outcomes[f] = run_fold(corpus, folds, f, options);
        } catch (...) {
          failures[f] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& failure : failures) {
      if (failure) std::rethrow_exception(failure);
    }
  }

  EvalReport report;
  report.cutoff = options.cutoff;
  report.folds = options.folds;
  report.seed = options.seed;
  double accuracy_sum = 0.0;
  std::size_t accuracy_folds = 0;
  double percent_sum = 0.0;
  std::size_t percent_folds = 0;
  for (auto& outcome : outcomes) {
    report.n_skipped_empty += outcome.skipped_empty;
    if (outcome.metrics.n_test > 0) {
      accuracy_sum += outcome.metrics.error_accuracy_at_c;
      ++accuracy_folds;
    }
    if (outcome.metrics.average_percent_error) {
      percent_sum += *outcome.metrics.average_percent_error;
      ++percent_folds;
    }
    report.n_excluded_zero_actual += outcome.metrics.n_excluded_zero_actual;
    report.pairs.insert(report.pairs.end(), outcome.pairs.begin(), outcome.pairs.end());
    report.per_fold.push_back(outcome.metrics);
  }
  if (report.pairs.empty()) throw Error(ErrorKind::EmptyInput, "no held-out subject line could be scored");
  report.n_total = report.pairs.size();
  report.error_accuracy_at_c = accuracy_sum / static_cast<double>(accuracy_folds);
  if (percent_folds > 0) report.average_percent_error_overall = percent_sum / static_cast<double>(percent_folds);
  report.groups = group_report(report.pairs, options.cutoff);
  return report;
}

}  // namespace nlorp
