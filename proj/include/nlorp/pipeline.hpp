#pragma once

#include <cstdint>
#include <span>

#include "nlorp/corpus.hpp"
#include "nlorp/lstm.hpp"
#include "nlorp/ngram_index.hpp"
#include "nlorp/predictor.hpp"

namespace nlorp {

struct TrainingConfig {
  StopwordSet stopwords = default_stopwords();
  std::uint64_t min_count = 1;
  LstmHyperparams lstm;
  PredictorConfig predictor;
};

struct TrainedArtifacts {
  MappingFile mapping;
  LstmModel model;  // stamped with mapping.build_id()
  TrainingLog log;
};

/// Builds the mapping, then fits the fallback model on every mapping entry
/// (phrase text -> average open rate).
TrainedArtifacts train_artifacts(std::span<const SubjectLineRecord> corpus, const TrainingConfig& config);

std::vector<LabeledPhrase> phrase_dataset(const MappingFile& mapping);

}  // namespace nlorp
