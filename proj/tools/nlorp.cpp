// nlorp: train phrase-rate artifacts, predict subject-line open rates,
// cross-validate, and serve predictions over HTTP.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nlorp/corpus.hpp"
#include "nlorp/error.hpp"
#include "nlorp/evaluation.hpp"
#include "nlorp/json_io.hpp"
#include "nlorp/pipeline.hpp"
#include "nlorp/predictor.hpp"
#include "nlorp/service.hpp"

// httplib pulls in <resolv.h>, whose _res macro breaks Eigen if it comes first.
#include <CLI11.hpp>
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kTrainingFailure = 3;

constexpr const char* kMappingFile = "mapping.tsv";
constexpr const char* kModelFile = "lstm.model";
constexpr const char* kMetaFile = "train_meta.json";

int exit_code_for(nlorp::ErrorKind kind) {
  switch (kind) {
    case nlorp::ErrorKind::NonFiniteLoss:
    case nlorp::ErrorKind::EmptyDataset:
      return kTrainingFailure;
    case nlorp::ErrorKind::EmptySubjectLine:
      return kUsage;
    default:
      return kDataError;
  }
}

std::string fixed6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

struct TrainingFlags {
  std::uint64_t seed = 7;
  std::uint64_t min_count = 1;
  std::string stopwords;
  nlorp::LstmHyperparams lstm;

  void attach(CLI::App& cmd) {
    cmd.add_option("--seed", seed, "Seed for model initialization, shuffling and dropout");
    cmd.add_option("--min-count", min_count, "Drop phrases seen fewer times")->check(CLI::PositiveNumber);
    cmd.add_option("--stopwords", stopwords, "Stopword file (whitespace separated)")->check(CLI::ExistingFile);
    cmd.add_option("--epochs", lstm.epochs, "LSTM training epochs")->check(CLI::PositiveNumber);
    cmd.add_option("--embed-dim", lstm.embed_dim, "Character embedding width")->check(CLI::PositiveNumber);
    cmd.add_option("--hidden-dim", lstm.hidden_dim, "LSTM hidden width")->check(CLI::PositiveNumber);
    cmd.add_option("--learning-rate", lstm.learning_rate, "SGD step size")->check(CLI::PositiveNumber);
    cmd.add_option("--dropout", lstm.dropout_rate, "Dropout between LSTM layers")->check(CLI::Range(0.0, 0.99));
    cmd.add_option("--max-seq-len", lstm.max_seq_len, "Characters kept per phrase")->check(CLI::PositiveNumber);
  }

  nlorp::TrainingConfig config() const {
    nlorp::TrainingConfig cfg;
    cfg.min_count = min_count;
    if (!stopwords.empty()) cfg.stopwords = nlorp::load_stopwords(stopwords);
    cfg.lstm = lstm;
    cfg.lstm.seed = seed;
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw nlorp::Error(nlorp::ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
}

int run_train(const std::string& data, const std::string& out_dir, const TrainingFlags& flags) {
  const auto records = nlorp::load_corpus(data);
  const auto config = flags.config();
  const auto artifacts = nlorp::train_artifacts(records, config);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw nlorp::Error(nlorp::ErrorKind::IoFailure, "cannot create " + out_dir + ": " + ec.message());
  nlorp::persist_mapping(artifacts.mapping, fs::path(out_dir) / kMappingFile);
  nlorp::persist_model(artifacts.model, fs::path(out_dir) / kModelFile);

  double rate_sum = 0.0;
  for (const auto& r : records) rate_sum += r.open_rate;
  const json meta = {
      {"build_id", artifacts.model.build_id},
      {"seed", flags.seed},
      {"n_records", records.size()},
      {"corpus_mean_open_rate", rate_sum / static_cast<double>(records.size())},
      {"config",
       {{"min_count", config.min_count},
        {"stopword_count", config.stopwords.size()},
        {"lstm", nlorp::hyperparams_to_json(config.lstm)}}},
      {"initial_loss", artifacts.log.initial_loss},
      {"loss_curve", artifacts.log.epoch_losses},
  };
  write_text(fs::path(out_dir) / kMetaFile, meta.dump(2) + "\n");

  std::cout << "records:         " << records.size() << "\n"
            << "mapping entries: " << artifacts.mapping.size() << " (unigram "
            << artifacts.mapping.count(nlorp::PhraseKind::Unigram) << ", bigram "
            << artifacts.mapping.count(nlorp::PhraseKind::Bigram) << ", trigram "
            << artifacts.mapping.count(nlorp::PhraseKind::Trigram) << ")\n"
            << "lstm loss:       " << artifacts.log.initial_loss << " -> "
            << (artifacts.log.epoch_losses.empty() ? artifacts.log.initial_loss : artifacts.log.epoch_losses.back())
            << "\n"
            << "build id:        " << artifacts.model.build_id << "\n"
            << "wrote " << out_dir << "\n";
  return kOk;
}

void print_component(const char* label, const nlorp::ComponentRate& c) {
  std::cout << "      " << label << " \"" << c.phrase.text() << "\" " << fixed6(nlorp::wire_rate(c.rate)) << " ("
            << nlorp::to_string(c.source) << ")\n";
}

int run_predict(const std::string& artifacts, const std::string& subject, bool as_json) {
  if (nlorp::normalize_text(subject).empty()) {
    std::cerr << "error: subject line is empty after normalization\n";
    return kUsage;
  }
  const auto handle =
      nlorp::load_predictor(fs::path(artifacts) / kMappingFile, fs::path(artifacts) / kModelFile);
  const auto prediction = nlorp::predict(*handle, subject);
  if (as_json) {
    std::cout << nlorp::prediction_to_json(prediction).dump() << "\n";
    return kOk;
  }
  std::cout << "open rate: " << fixed6(nlorp::wire_rate(prediction.open_rate)) << "\n";
  std::cout << "selected phrases (" << prediction.selected.size() << "):\n";
  for (const auto& unit : prediction.selected) {
    std::cout << "  [" << unit.trigram.span.start << "," << unit.trigram.span.end << ") \"" << unit.trigram.text()
              << "\" " << fixed6(nlorp::wire_rate(unit.rate)) << "\n";
    if (unit.trigram_component) print_component("trigram", *unit.trigram_component);
    for (const auto& c : unit.bigram_components) print_component("bigram ", c);
    for (const auto& c : unit.unigram_components) print_component("unigram", c);
  }
  return kOk;
}

std::string percent(const std::optional<double>& value) {
  if (!value) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", *value * 100.0);
  return buf;
}

int run_evaluate(const std::string& data, std::size_t folds, double cutoff, std::uint64_t seed,
                 const std::string& report_path, const TrainingFlags& flags) {
  const auto records = nlorp::load_corpus(data);
  nlorp::CrossValidationOptions options;
  options.folds = folds;
  options.cutoff = cutoff;
  options.seed = seed;
  options.training = flags.config();
  const auto report = nlorp::cross_validate(records, options);
  if (!report_path.empty()) write_text(report_path, nlorp::report_to_json(report).dump(2) + "\n");

  std::printf("%-6s %8s %8s %16s %14s\n", "fold", "train", "test", "error_acc@C", "avg % error");
  for (const auto& f : report.per_fold) {
    std::printf("%-6zu %8zu %8zu %16s %14s\n", f.fold, f.n_train, f.n_test,
                percent(f.error_accuracy_at_c).c_str(), percent(f.average_percent_error).c_str());
  }
  std::printf("%-6s %8s %8zu %16s %14s\n", "mean", "", report.n_total, percent(report.error_accuracy_at_c).c_str(),
              percent(report.average_percent_error_overall).c_str());
  std::printf("\ncutoff C = %g\n", cutoff);
  std::printf("  error <= C: share %s, avg %% error %s, count %zu\n", percent(report.groups.within.share).c_str(),
              percent(report.groups.within.avg_percent_error).c_str(), report.groups.within.count);
  std::printf("  error >  C: share %s, avg %% error %s, count %zu\n", percent(report.groups.beyond.share).c_str(),
              percent(report.groups.beyond.avg_percent_error).c_str(), report.groups.beyond.count);
  if (report.n_excluded_zero_actual) {
    std::printf("  %zu pair(s) with zero actual rate excluded from %% error\n", report.n_excluded_zero_actual);
  }
  return kOk;
}

int run_serve(const std::string& artifacts, std::string mapping, std::string model, const std::string& host,
              int port, bool cors) {
  if (mapping.empty()) mapping = (fs::path(artifacts) / kMappingFile).string();
  if (model.empty()) model = (fs::path(artifacts) / kModelFile).string();
  auto handle = nlorp::load_predictor(mapping, model);

  // The training corpus mean lives in train_meta.json; older or hand-assembled
  // artifact sets may not have one.
  std::optional<double> corpus_mean;
  const fs::path artifact_dir = artifacts.empty() ? fs::path(mapping).parent_path() : fs::path(artifacts);
  const auto meta_path = artifact_dir / kMetaFile;
  if (std::ifstream meta_in(meta_path); meta_in) {
    const json meta = json::parse(meta_in, nullptr, false);
    if (meta.is_object() && meta.value("build_id", "") == handle->build_id() &&
        meta.contains("corpus_mean_open_rate") && meta["corpus_mean_open_rate"].is_number()) {
      corpus_mean = meta["corpus_mean_open_rate"].get<double>();
    }
  }
  const nlorp::PredictionService service(std::move(handle), corpus_mean);

  httplib::Server server;
  service.install(server, cors);
  if (!server.bind_to_port(host, port)) {
    std::cerr << "error: cannot bind " << host << ":" << port << "\n";
    return kUsage;
  }
  std::cout << "serving on http://" << host << ":" << port << std::endl;
  server.listen_after_bind();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subject-line open rate prediction from historical phrase rates"};
  app.require_subcommand(1);

  TrainingFlags train_flags;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train", "Build mapping.tsv, lstm.model and train_meta.json");
  train->add_option("--data", train_data, "Corpus CSV")->required();
  train->add_option("--out", train_out, "Artifacts directory")->required();
  train_flags.attach(*train);

  std::string predict_artifacts, predict_subject;
  bool predict_json = false;
  auto* predict = app.add_subcommand("predict", "Predict the open rate of one subject line");
  predict->add_option("--artifacts", predict_artifacts, "Artifacts directory")->required();
  predict->add_option("subject", predict_subject, "Subject line")->required();
  predict->add_flag("--json", predict_json, "Emit the prediction as JSON");

  TrainingFlags eval_flags;
  std::string eval_data, eval_report;
  std::size_t eval_folds = 5;
  double eval_cutoff = 0.1;
  auto* evaluate = app.add_subcommand("evaluate", "k-fold cross validation");
  evaluate->add_option("--data", eval_data, "Corpus CSV")->required();
  evaluate->add_option("--folds", eval_folds, "Number of folds (at least 2)")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  evaluate->add_option("--cutoff", eval_cutoff, "Error tolerance C")->check(CLI::PositiveNumber);
  evaluate->add_option("--report", eval_report, "Write the JSON report here");
  eval_flags.attach(*evaluate);
  evaluate->get_option("--seed")->description("Seed for the fold split and model training");

  std::string serve_artifacts, serve_mapping, serve_model, serve_host = "127.0.0.1";
  int serve_port = 8080;
  bool serve_cors = false;
  auto* serve = app.add_subcommand("serve", "Serve predictions over HTTP");
  serve->add_option("--artifacts", serve_artifacts, "Artifacts directory");
  serve->add_option("--mapping", serve_mapping, "Mapping file (overrides --artifacts)");
  serve->add_option("--model", serve_model, "Model file (overrides --artifacts)");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_flag("--cors", serve_cors, "Send permissive CORS headers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return run_train(train_data, train_out, train_flags);
    if (*predict) return run_predict(predict_artifacts, predict_subject, predict_json);
    if (*evaluate) return run_evaluate(eval_data, eval_folds, eval_cutoff, eval_flags.seed, eval_report, eval_flags);
    if (*serve) {
      if (serve_artifacts.empty() && (serve_mapping.empty() || serve_model.empty())) {
        std::cerr << "error: serve needs --artifacts or both --mapping and --model\n";
        return kUsage;
      }
      return run_serve(serve_artifacts, serve_mapping, serve_model, serve_host, serve_port, serve_cors);
    }
  } catch (const nlorp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
