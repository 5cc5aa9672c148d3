#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nlorp/lstm.hpp"
#include "nlorp/ngram_index.hpp"

namespace nlorp {

enum class RateSource { Mapping, Lstm };

std::string_view to_string(RateSource source);

struct PhraseRate {
  double rate = 0.0;
  RateSource source = RateSource::Mapping;
};

struct ComponentRate {
  Phrase phrase;
  double rate = 0.0;
  RateSource source = RateSource::Mapping;
};

/// Score of one scoring unit. The unit is a trigram except for two-token
/// and one-token subject lines, where the whole line is the unit and
/// `trigram_component` is absent.
struct TrigramScore {
  Phrase trigram;
  double rate = 0.0;
  std::optional<ComponentRate> trigram_component;
  std::vector<ComponentRate> bigram_components;
  std::vector<ComponentRate> unigram_components;
};

struct Prediction {
  std::vector<std::string> tokens;
  double open_rate = 0.0;
  std::vector<TrigramScore> selected;  // descending rate, pairwise disjoint
};

enum class Aggregation {
  GroupMean,  // mean of {trigram, mean(bigrams), mean(unigrams)} over non-empty groups
  FlatMean,   // mean over every component rate
};

struct PredictorConfig {
  Aggregation aggregation = Aggregation::GroupMean;
  std::size_t top_k = 5;
};

/// Mapping and fallback model from one training run, plus aggregation
/// settings. Construction fails with BuildMismatch if the model's build
/// stamp differs from the mapping's.
class PredictorHandle {
 public:
  PredictorHandle(MappingFile mapping, LstmModel model, PredictorConfig config = {});

  const MappingFile& mapping() const { return mapping_; }
  const LstmModel& model() const { return model_; }
  const PredictorConfig& config() const { return config_; }
  const std::string& build_id() const { return build_id_; }

  double lstm_rate(std::string_view phrase_text) const;

 private:
  MappingFile mapping_;
  LstmModel model_;
  PredictorConfig config_;
  CharEncoder encoder_;
  std::string build_id_;
};

/// Stored rate when the phrase is in the mapping, otherwise the LSTM score.
PhraseRate phrase_rate(const PredictorHandle& handle, const Phrase& phrase);

/// Combines component rates under the configured aggregation. Empty groups
/// are skipped; a missing trigram rate is passed as nullopt.
double aggregate_components(Aggregation aggregation, std::optional<double> trigram_rate,
                            std::span<const double> bigram_rates, std::span<const double> unigram_rates);

/// Scores one trigram from its own rate and those of its two bigrams and its
/// non-stopword unigrams.
TrigramScore trigram_score(const PredictorHandle& handle, const Phrase& trigram, const StopwordSet& stopwords);
TrigramScore trigram_score(const PredictorHandle& handle, const Phrase& trigram);

/// Greedy pick in descending rate order, skipping any span that shares a
/// token with an earlier pick. Equal rates go to the smaller start, then
/// the lexicographically smaller text.
std::vector<TrigramScore> select_top_nonoverlapping(std::span<const TrigramScore> scores, std::size_t k = 5);

/// Mean of the selected unit rates.
double final_open_rate(std::span<const double> selected_rates);

Prediction predict(const PredictorHandle& handle, std::string_view subject_line);

/// Predicts from already-normalized tokens.
Prediction predict_tokens(const PredictorHandle& handle, std::span<const std::string> tokens);

}  // namespace nlorp
