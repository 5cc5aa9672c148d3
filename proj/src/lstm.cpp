#include "nlorp/lstm.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "nlorp/text_format.hpp"
#include "nlorp/utf8.hpp"

namespace nlorp {

void validate(const LstmHyperparams& hp) {
  auto bad = [](const std::string& what) { return Error(ErrorKind::ShapeMismatch, "hyperparameter " + what); };
  if (hp.embed_dim < 1) throw bad("embed_dim must be >= 1");
  if (hp.hidden_dim < 1) throw bad("hidden_dim must be >= 1");
  if (hp.num_layers != 3) throw bad("num_layers must be 3");
  if (!(hp.dropout_rate >= 0.0 && hp.dropout_rate < 1.0)) throw bad("dropout_rate must lie in [0,1)");
  if (hp.max_seq_len < 1) throw bad("max_seq_len must be >= 1");
  if (!(hp.learning_rate > 0.0) || !std::isfinite(hp.learning_rate)) throw bad("learning_rate must be > 0");
  if (hp.epochs < 1) throw bad("epochs must be >= 1");
  if (!(hp.clip_norm > 0.0)) throw bad("clip_norm must be > 0");
  std::set<char32_t> unique(hp.charset.begin(), hp.charset.end());
  if (unique.size() != hp.charset.size()) throw bad("charset contains duplicates");
}

CharEncoder::CharEncoder(const LstmHyperparams& hp) : max_seq_len_(hp.max_seq_len) {
  for (std::size_t i = 0; i < hp.charset.size(); ++i) index_.emplace(hp.charset[i], static_cast<int>(i) + 1);
}

std::vector<int> CharEncoder::encode(std::string_view utf8_text) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < utf8_text.size() && out.size() < static_cast<std::size_t>(max_seq_len_)) {
    const char32_t cp = utf8::decode(utf8_text, i);
    const auto it = index_.find(cp);
    out.push_back(it == index_.end() ? 0 : it->second);
  }
  if (out.empty()) out.push_back(0);
  return out;
}

std::vector<int> encode_phrase(std::string_view phrase_text, const LstmHyperparams& hp) {
  return CharEncoder(hp).encode(phrase_text);
}

double predict_phrase(const LstmModel& model, std::string_view phrase_text) {
  const auto sequence = encode_phrase(phrase_text, model.hyperparams);
  return forward(model, std::span<const int>(sequence));
}

namespace {

struct EncodedSample {
  std::vector<int> sequence;
  double label = 0.0;
};

std::vector<EncodedSample> encode_dataset(std::span<const LabeledPhrase> dataset, const LstmHyperparams& hp) {
  const CharEncoder encoder(hp);
  std::vector<EncodedSample> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset) out.push_back({encoder.encode(item.text), item.open_rate});
  return out;
}

double dataset_mse(const LstmModel& model, std::span<const EncodedSample> samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double diff = forward(model, std::span<const int>(s.sequence)) - s.label;
    total += diff * diff;
  }
  return total / static_cast<double>(samples.size());
}

double squared_norm(const LstmParams<double>& grads) {
  double total = 0.0;
  grads.for_each_tensor([&](const std::string&, Eigen::Index, Eigen::Index, auto map) {
    total += map.squaredNorm();
  });
  return total;
}

void apply_update(LstmParams<double>& params, const LstmParams<double>& grads, double step) {
  params.embedding -= step * grads.embedding;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weights -= step * grads.layers[l].weights;
    params.layers[l].bias -= step * grads.layers[l].bias;
  }
  params.head_weights -= step * grads.head_weights;
  params.head_bias -= step * grads.head_bias;
}

}  // namespace

double mean_squared_error(const LstmModel& model, std::span<const LabeledPhrase> dataset) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "no samples");
  const auto samples = encode_dataset(dataset, model.hyperparams);
  return dataset_mse(model, samples);
}

LstmModel train_lstm(std::span<const LabeledPhrase> dataset, const LstmHyperparams& hp, TrainingLog* log) {
  validate(hp);
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "cannot train on an empty dataset");
  for (const auto& item : dataset) {
    if (!(item.open_rate >= 0.0 && item.open_rate <= 1.0)) {
      throw Error(ErrorKind::RateOutOfRange, "label for '" + item.text + "' outside [0,1]");
    }
  }

  const auto samples = encode_dataset(dataset, hp);
  Rng rng(hp.seed);
  LstmModel model{hp, initialize_params<double>(hp, rng), {}};
  auto grads = LstmParams<double>::zeros(hp);

  if (log) {
    log->initial_loss = dataset_mse(model, samples);
    log->epoch_losses.clear();
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t index : order) {
      const auto& sample = samples[index];
      grads.set_zero();
      const double loss = loss_and_gradient(model, std::span<const int>(sample.sequence), sample.label, grads, &rng);
      const double norm = std::sqrt(squared_norm(grads));
      if (!std::isfinite(loss) || !std::isfinite(norm)) {
        throw Error(ErrorKind::NonFiniteLoss, "non-finite loss or gradient at epoch " + std::to_string(epoch + 1) +
                                                  " on phrase '" + dataset[index].text + "'");
      }
      const double scale = norm > hp.clip_norm ? hp.clip_norm / norm : 1.0;
      apply_update(model.params, grads, hp.learning_rate * scale);
    }
    const double epoch_loss = dataset_mse(model, samples);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorKind::NonFiniteLoss, "training loss diverged at epoch " + std::to_string(epoch + 1));
    }
    if (log) log->epoch_losses.push_back(epoch_loss);
  }
  return model;
}

// ---------------------------------------------------------------------------

double finite_difference_deviation(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                                   std::span<const Eigen::Index> coordinates, double epsilon, double abs_floor) {
  double worst = 0.0;
  Eigen::VectorXd probe = point;
  for (Eigen::Index i : coordinates) {
    const double original = probe[i];
    probe[i] = original + epsilon;
    const double plus = fn(probe);
    probe[i] = original - epsilon;
    const double minus = fn(probe);
    probe[i] = original;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double diff = std::abs(analytic[i] - numeric);
    const double deviation = std::abs(numeric) >= abs_floor ? diff / std::abs(numeric) : diff;
    worst = std::max(worst, deviation);
  }
  return worst;
}

GradientCheckResult gradient_check(const LstmModel& model, const LabeledPhrase& sample, double epsilon,
                                   const GradientCheckOptions& options) {
  LstmModel probe_model = model;
  probe_model.hyperparams.dropout_rate = 0.0;
  const auto sequence = encode_phrase(sample.text, model.hyperparams);
  const std::span<const int> seq(sequence);

  auto grads = LstmParams<double>::zeros(model.hyperparams);
  loss_and_gradient(probe_model, seq, sample.open_rate, grads);
  Eigen::VectorXd analytic = flatten(grads);
  const Eigen::VectorXd point = flatten(model.params);

  struct Tensor {
    std::string name;
    Eigen::Index offset, rows, cols;
  };
  std::vector<Tensor> tensors;
  Eigen::Index offset = 0;
  model.params.for_each_tensor([&](const std::string& name, Eigen::Index rows, Eigen::Index cols, auto map) {
    tensors.push_back({name, offset, rows, cols});
    offset += map.size();
  });

  Rng rng(options.seed);
  std::set<Eigen::Index> chosen;
  auto draw_from = [&](const Tensor& t, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) chosen.insert(t.offset + static_cast<Eigen::Index>(rng.index(t.rows * t.cols)));
  };

  // Embedding rows outside the sample have identically zero gradient, so
  // only rows the sample touches are drawn.
  std::vector<int> used(sequence.begin(), sequence.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  const Tensor& embedding = tensors.front();
  for (std::size_t k = 0; k < options.samples_per_group; ++k) {
    const auto row = used[rng.index(used.size())];
    const auto col = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(embedding.cols)));
    chosen.insert(embedding.offset + row + col * embedding.rows);
  }
  for (std::size_t t = 1; t < tensors.size(); ++t) {
    if (tensors[t].name == "head.bias") {
      chosen.insert(tensors[t].offset);
    } else {
      draw_from(tensors[t], options.samples_per_group);
    }
  }
  if (options.corrupt_index) {
    chosen.insert(*options.corrupt_index);
    analytic[*options.corrupt_index] *= 2.0;
  }

  auto loss_at = [&](const Eigen::VectorXd& flat) {
    unflatten(flat, probe_model.params);
    const double diff = forward(probe_model, seq) - sample.open_rate;
    return diff * diff;
  };
  const std::vector<Eigen::Index> coordinates(chosen.begin(), chosen.end());
  GradientCheckResult result;
  result.max_deviation = finite_difference_deviation(loss_at, point, analytic, coordinates, epsilon);
  result.parameters_checked = coordinates.size();
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

std::string format_model(const LstmModel& model) {
  const auto& hp = model.hyperparams;
  std::ostringstream out;
  out << kModelHeader << '\n';
  out << "embed_dim " << hp.embed_dim << '\n';
  out << "hidden_dim " << hp.hidden_dim << '\n';
  out << "num_layers " << hp.num_layers << '\n';
  out << "dropout_rate " << format_double(hp.dropout_rate) << '\n';
  out << "max_seq_len " << hp.max_seq_len << '\n';
  out << "learning_rate " << format_double(hp.learning_rate) << '\n';
  out << "epochs " << hp.epochs << '\n';
  out << "seed " << hp.seed << '\n';
  out << "clip_norm " << format_double(hp.clip_norm) << '\n';
  out << "build_id " << (model.build_id.empty() ? "-" : model.build_id) << '\n';
  out << "charset";
  for (char32_t c : hp.charset) out << ' ' << static_cast<std::uint32_t>(c);
  out << '\n';
  model.params.for_each_tensor([&](const std::string& name, Eigen::Index rows, Eigen::Index cols, auto map) {
    out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    // Row-major text order; storage is column-major.
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (r || c) out << ' ';
        out << format_double(map[r + c * rows]);
      }
    }
    out << '\n';
  });
  return out.str();
}

LstmModel parse_model(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto corrupt = [&](const std::string& what) {
    return Error(ErrorKind::CorruptEntry, std::string(origin) + ":" + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw corrupt("empty model file");
  if (line != kModelHeader) {
    throw Error(ErrorKind::VersionMismatch, std::string(origin) + ": expected header '" +
                                                std::string(kModelHeader) + "', got '" + line + "'");
  }

  std::map<std::string, std::string> fields;
  LstmModel model;
  bool have_charset = false;
  while (!have_charset) {
    if (!next_line()) throw Error(ErrorKind::ShapeMismatch, std::string(origin) + ": truncated header block");
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "charset") {
      std::istringstream codes(value);
      std::uint32_t code = 0;
      std::u32string charset;
      std::string token;
      while (codes >> token) {
        auto parsed = parse_integer<std::uint32_t>(token);
        if (!parsed || *parsed > 0x10FFFF) throw corrupt("bad charset code point '" + token + "'");
        code = *parsed;
        charset.push_back(static_cast<char32_t>(code));
      }
      model.hyperparams.charset = std::move(charset);
      have_charset = true;
    } else {
      fields[key] = value;
    }
  }

  auto take = [&](const std::string& key) -> std::string {
    auto it = fields.find(key);
    if (it == fields.end()) throw corrupt("missing field '" + key + "'");
    std::string value = it->second;
    fields.erase(it);
    return value;
  };
  auto take_int = [&](const std::string& key) {
    auto v = parse_integer<int>(take(key));
    if (!v) throw corrupt("field '" + key + "' is not an integer");
    return *v;
  };
  auto take_double = [&](const std::string& key) {
    auto v = parse_double(take(key));
    if (!v) throw corrupt("field '" + key + "' is not a number");
    return *v;
  };
  auto& hp = model.hyperparams;
  hp.embed_dim = take_int("embed_dim");
  hp.hidden_dim = take_int("hidden_dim");
  hp.num_layers = take_int("num_layers");
  hp.dropout_rate = take_double("dropout_rate");
  hp.max_seq_len = take_int("max_seq_len");
  hp.learning_rate = take_double("learning_rate");
  hp.epochs = take_int("epochs");
  {
    auto seed = parse_integer<std::uint64_t>(take("seed"));
    if (!seed) throw corrupt("field 'seed' is not an integer");
    hp.seed = *seed;
  }
  hp.clip_norm = take_double("clip_norm");
  model.build_id = take("build_id");
  if (model.build_id == "-") model.build_id.clear();
  if (!fields.empty()) throw corrupt("unknown field '" + fields.begin()->first + "'");
  validate(hp);

  model.params = LstmParams<double>::zeros(hp);
  model.params.for_each_tensor([&](const std::string& name, Eigen::Index rows, Eigen::Index cols, auto map) {
    auto shape_error = [&](const std::string& what) {
      return Error(ErrorKind::ShapeMismatch,
                   std::string(origin) + ":" + std::to_string(line_no) + ": tensor " + name + ": " + what);
    };
    if (!next_line()) throw shape_error("missing");
    std::istringstream header(line);
    std::string tag, got_name;
    Eigen::Index got_rows = 0, got_cols = 0;
    if (!(header >> tag >> got_name >> got_rows >> got_cols) || tag != "tensor") {
      throw corrupt("expected tensor header for " + name);
    }
    if (got_name != name) throw shape_error("found '" + got_name + "' instead");
    if (got_rows != rows || got_cols != cols) {
      throw shape_error("shape " + std::to_string(got_rows) + "x" + std::to_string(got_cols) + ", expected " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!next_line()) throw shape_error("values missing");
    std::istringstream values(line);
    std::string token;
    Eigen::Index count = 0;
    while (values >> token) {
      if (count >= rows * cols) throw shape_error("too many values");
      auto v = parse_double(token);
      if (!v || !std::isfinite(*v)) throw corrupt("bad value '" + token + "' in " + name);
      const Eigen::Index r = count / cols;
      const Eigen::Index c = count % cols;
      map[r + c * rows] = *v;
      ++count;
    }
    if (count != rows * cols) {
      throw shape_error(std::to_string(count) + " values, expected " + std::to_string(rows * cols));
    }
  });
  while (next_line()) {
    if (!line.empty()) throw corrupt("trailing content");
  }
  return model;
}

void persist_model(const LstmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << format_model(model);
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

LstmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str(), path.string());
}

}  // namespace nlorp
