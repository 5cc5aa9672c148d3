#include "nlorp/predictor.hpp"

#include <algorithm>

#include "nlorp/error.hpp"

namespace nlorp {

std::string_view to_string(RateSource source) {
  return source == RateSource::Mapping ? "mapping" : "lstm";
}

PredictorHandle::PredictorHandle(MappingFile mapping, LstmModel model, PredictorConfig config)
    : mapping_(std::move(mapping)),
      model_(std::move(model)),
      config_(config),
      encoder_(model_.hyperparams),
      build_id_(mapping_.build_id()) {
  if (model_.build_id != build_id_) {
    throw Error(ErrorKind::BuildMismatch, "model build id '" + model_.build_id +
                                              "' does not match mapping build id '" + build_id_ + "'");
  }
  if (config_.top_k == 0) throw Error(ErrorKind::ShapeMismatch, "top_k must be >= 1");
}

double PredictorHandle::lstm_rate(std::string_view phrase_text) const {
  const auto sequence = encoder_.encode(phrase_text);
  return forward(model_, std::span<const int>(sequence));
}

PhraseRate phrase_rate(const PredictorHandle& handle, const Phrase& phrase) {
  const std::string text = phrase.text();
  if (const auto* stats = handle.mapping().find(phrase.kind, text)) {
    return {stats->avg_open_rate, RateSource::Mapping};
  }
  return {handle.lstm_rate(text), RateSource::Lstm};
}

namespace {

double mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

ComponentRate resolve(const PredictorHandle& handle, Phrase phrase) {
  const auto r = phrase_rate(handle, phrase);
  return {std::move(phrase), r.rate, r.source};
}

std::vector<double> rates_of(const std::vector<ComponentRate>& components) {
  std::vector<double> out;
  out.reserve(components.size());
  for (const auto& c : components) out.push_back(c.rate);
  return out;
}

// Scores the whole of a one- or two-token line.
TrigramScore short_unit_score(const PredictorHandle& handle, std::span<const std::string> tokens) {
  TrigramScore score;
  score.trigram = make_phrase(tokens, 0, tokens.size());
  if (tokens.size() == 2) {
    score.bigram_components.push_back(resolve(handle, score.trigram));
    for (std::size_t i = 0; i < 2; ++i) {
      if (handle.mapping().is_stopword(tokens[i])) continue;
      score.unigram_components.push_back(resolve(handle, make_phrase(tokens, i, 1)));
    }
  } else {
    // A lone token is always scored, even a stopword (via the LSTM).
    score.unigram_components.push_back(resolve(handle, score.trigram));
  }
  score.rate = aggregate_components(handle.config().aggregation, std::nullopt, rates_of(score.bigram_components),
                                    rates_of(score.unigram_components));
  return score;
}

bool ranks_before(const TrigramScore& a, const TrigramScore& b) {
  if (a.rate != b.rate) return a.rate > b.rate;
  if (a.trigram.span.start != b.trigram.span.start) return a.trigram.span.start < b.trigram.span.start;
  return a.trigram.text() < b.trigram.text();
}

}  // namespace

double aggregate_components(Aggregation aggregation, std::optional<double> trigram_rate,
                            std::span<const double> bigram_rates, std::span<const double> unigram_rates) {
  std::vector<double> parts;
  if (aggregation == Aggregation::FlatMean) {
    if (trigram_rate) parts.push_back(*trigram_rate);
    parts.insert(parts.end(), bigram_rates.begin(), bigram_rates.end());
    parts.insert(parts.end(), unigram_rates.begin(), unigram_rates.end());
  } else {
    if (trigram_rate) parts.push_back(*trigram_rate);
    if (!bigram_rates.empty()) parts.push_back(mean(bigram_rates));
    if (!unigram_rates.empty()) parts.push_back(mean(unigram_rates));
  }
  if (parts.empty()) return 0.0;
  return std::clamp(mean(parts), 0.0, 1.0);
}

TrigramScore trigram_score(const PredictorHandle& handle, const Phrase& trigram, const StopwordSet& stopwords) {
  if (trigram.kind != PhraseKind::Trigram || trigram.tokens.size() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "trigram_score needs a three-token phrase");
  }
  TrigramScore score;
  score.trigram = trigram;
  score.trigram_component = resolve(handle, trigram);

  const std::span<const std::string> tokens(trigram.tokens);
  const std::size_t base = trigram.span.start;
  for (std::size_t i = 0; i < 2; ++i) {
    Phrase bigram = make_phrase(tokens, i, 2);
    bigram.span = {base + i, base + i + 2};
    score.bigram_components.push_back(resolve(handle, std::move(bigram)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (stopwords.contains(tokens[i])) continue;
    Phrase unigram = make_phrase(tokens, i, 1);
    unigram.span = {base + i, base + i + 1};
    score.unigram_components.push_back(resolve(handle, std::move(unigram)));
  }
  score.rate = aggregate_components(handle.config().aggregation, score.trigram_component->rate,
                                    rates_of(score.bigram_components), rates_of(score.unigram_components));
  return score;
}

TrigramScore trigram_score(const PredictorHandle& handle, const Phrase& trigram) {
  return trigram_score(handle, trigram, handle.mapping().stopwords());
}

std::vector<TrigramScore> select_top_nonoverlapping(std::span<const TrigramScore> scores, std::size_t k) {
  std::vector<const TrigramScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return ranks_before(*a, *b); });

  std::vector<TrigramScore> kept;
  for (const auto* candidate : order) {
    if (kept.size() >= k) break;
    const bool clashes = std::any_of(kept.begin(), kept.end(), [&](const TrigramScore& taken) {
      return taken.trigram.span.overlaps(candidate->trigram.span);
    });
    if (!clashes) kept.push_back(*candidate);
  }
  return kept;
}

double final_open_rate(std::span<const double> selected_rates) {
  if (selected_rates.empty()) throw Error(ErrorKind::EmptyInput, "no selected phrases to average");
  return std::clamp(mean(selected_rates), 0.0, 1.0);
}

Prediction predict_tokens(const PredictorHandle& handle, std::span<const std::string> tokens) {
  if (tokens.empty()) throw Error(ErrorKind::EmptySubjectLine, "subject line has no tokens after normalization");

  Prediction prediction;
  prediction.tokens.assign(tokens.begin(), tokens.end());
  if (tokens.size() < 3) {
    prediction.selected.push_back(short_unit_score(handle, tokens));
  } else {
    std::vector<TrigramScore> scores;
    for (const auto& trigram : extract_phrases(tokens, PhraseKind::Trigram)) {
      scores.push_back(trigram_score(handle, trigram));
    }
    prediction.selected = select_top_nonoverlapping(scores, handle.config().top_k);
  }
  std::vector<double> rates;
  for (const auto& s : prediction.selected) rates.push_back(s.rate);
  prediction.open_rate = final_open_rate(rates);
  return prediction;
}

Prediction predict(const PredictorHandle& handle, std::string_view subject_line) {
  const auto tokens = normalize_text(subject_line);
  return predict_tokens(handle, tokens);
}

}  // namespace nlorp
