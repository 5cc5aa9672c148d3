#include "nlorp/json_io.hpp"

#include <cmath>

namespace nlorp {

using nlohmann::json;

double wire_rate(double rate) { return std::round(rate * 1e6) / 1e6; }

namespace {

json span_json(const TokenSpan& span) { return json::array({span.start, span.end}); }

json component_json(const ComponentRate& c) {
  return {{"text", c.phrase.text()},
          {"token_span", span_json(c.phrase.span)},
          {"rate", wire_rate(c.rate)},
          {"source", std::string(to_string(c.source))}};
}

json optional_number(const std::optional<double>& value) { return value ? json(*value) : json(nullptr); }

json group_json(const GroupStats& g) {
  return {{"share", g.share}, {"avg_percent_error", optional_number(g.avg_percent_error)}, {"count", g.count}};
}

}  // namespace

json prediction_to_json(const Prediction& prediction) {
  json phrases = json::array();
  for (const auto& unit : prediction.selected) {
    json bigrams = json::array();
    for (const auto& c : unit.bigram_components) bigrams.push_back(component_json(c));
    json unigrams = json::array();
    for (const auto& c : unit.unigram_components) unigrams.push_back(component_json(c));
    phrases.push_back({
        {"text", unit.trigram.text()},
        {"kind", std::string(to_string(unit.trigram.kind))},
        {"token_span", span_json(unit.trigram.span)},
        {"rate", wire_rate(unit.rate)},
        {"components",
         {{"trigram", unit.trigram_component ? component_json(*unit.trigram_component) : json(nullptr)},
          {"bigrams", std::move(bigrams)},
          {"unigrams", std::move(unigrams)}}},
    });
  }
  return {{"open_rate", wire_rate(prediction.open_rate)}, {"tokens", prediction.tokens}, {"phrases", std::move(phrases)}};
}

json hyperparams_to_json(const LstmHyperparams& hp) {
  return {{"embed_dim", hp.embed_dim},         {"hidden_dim", hp.hidden_dim},
          {"num_layers", hp.num_layers},       {"dropout_rate", hp.dropout_rate},
          {"max_seq_len", hp.max_seq_len},     {"learning_rate", hp.learning_rate},
          {"epochs", hp.epochs},               {"seed", hp.seed},
          {"clip_norm", hp.clip_norm},         {"charset_size", hp.charset.size()}};
}

json model_info_to_json(const PredictorHandle& handle, std::optional<double> corpus_mean_open_rate) {
  const auto& mapping = handle.mapping();
  return {{"build_id", handle.build_id()},
          {"mapping_entry_counts",
           {{"unigram", mapping.count(PhraseKind::Unigram)},
            {"bigram", mapping.count(PhraseKind::Bigram)},
            {"trigram", mapping.count(PhraseKind::Trigram)}}},
          {"lstm", hyperparams_to_json(handle.model().hyperparams)},
          {"stopword_count", mapping.stopwords().size()},
          {"top_k", handle.config().top_k},
          {"aggregation", handle.config().aggregation == Aggregation::GroupMean ? "group_mean" : "flat_mean"},
          {"corpus_mean_open_rate",
           corpus_mean_open_rate ? json(wire_rate(*corpus_mean_open_rate)) : json(nullptr)}};
}

json report_to_json(const EvalReport& report) {
  json per_fold = json::array();
  for (const auto& f : report.per_fold) {
    per_fold.push_back({{"fold", f.fold},
                        {"n_train", f.n_train},
                        {"n_test", f.n_test},
                        {"error_accuracy_at_c", f.error_accuracy_at_c},
                        {"average_percent_error", optional_number(f.average_percent_error)},
                        {"n_excluded_zero_actual", f.n_excluded_zero_actual},
                        {"lstm_initial_loss", f.lstm_initial_loss},
                        {"lstm_final_loss", f.lstm_final_loss}});
  }
  const auto& g = report.groups;
  return {
      {"cutoff", report.cutoff},
      {"folds", report.folds},
      {"seed", report.seed},
      {"error_accuracy_at_c", report.error_accuracy_at_c},
      {"average_percent_error_overall", optional_number(report.average_percent_error_overall)},
      {"groups", {{"within", group_json(g.within)}, {"beyond", group_json(g.beyond)}}},
      {"per_fold", std::move(per_fold)},
      {"n_total", report.n_total},
      {"n_excluded_zero_actual", report.n_excluded_zero_actual},
      {"n_skipped_empty", report.n_skipped_empty},
      {"chart",
       {{"pie", json::array({{{"label", "error <= cutoff"}, {"value", g.within.share}},
                             {{"label", "error > cutoff"}, {"value", g.beyond.share}}})},
        {"bar", json::array({{{"label", "error <= cutoff"}, {"value", optional_number(g.within.avg_percent_error)}},
                             {{"label", "error > cutoff"}, {"value", optional_number(g.beyond.avg_percent_error)}}})}}},
  };
}

}  // namespace nlorp
