#include "nlorp/pipeline.hpp"

#include "nlorp/error.hpp"

namespace nlorp {

std::vector<LabeledPhrase> phrase_dataset(const MappingFile& mapping) {
  std::vector<LabeledPhrase> out;
  out.reserve(mapping.size());
  for (const auto& [key, stats] : mapping.entries()) out.push_back({key.second, stats.avg_open_rate});
  return out;
}

TrainedArtifacts train_artifacts(std::span<const SubjectLineRecord> corpus, const TrainingConfig& config) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "no training records");
  const auto tokenized = tokenize_corpus(corpus);
  TrainedArtifacts out;
  out.mapping = build_mapping(tokenized, config.stopwords, config.min_count);
  const auto dataset = phrase_dataset(out.mapping);
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "mapping has no phrases to train the fallback model on");
  out.model = train_lstm(dataset, config.lstm, &out.log);
  out.model.build_id = out.mapping.build_id();
  return out;
}

}  // namespace nlorp
