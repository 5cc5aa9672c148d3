#pragma once

// Character-level stacked LSTM regressor used to score phrases that are
// missing from the mapping file.
//
// Layout per layer l (input width `in`, hidden width H):
//   weights  4H x (in + H), rows grouped as [input; forget; cell; output]
//   bias     4H
// The input to layer 0 is the embedding row of each character; the output
// head reads the last layer's final hidden state:
//   y = logistic(head_weights . h_T + head_bias)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nlorp/error.hpp"
#include "nlorp/rng.hpp"

namespace nlorp {

struct LstmHyperparams {
  /// Permitted characters; index 0 of the encoded alphabet is the UNK slot,
  /// so charset[i] encodes to i + 1.
  std::u32string charset = U" abcdefghijklmnopqrstuvwxyz0123456789%$";
  int embed_dim = 24;
  int hidden_dim = 48;
  int num_layers = 3;
  double dropout_rate = 0.2;
  int max_seq_len = 64;
  double learning_rate = 0.01;
  int epochs = 50;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;

  int vocab_size() const { return static_cast<int>(charset.size()) + 1; }
  bool operator==(const LstmHyperparams&) const = default;
};

/// Throws ShapeMismatch when a field is out of its documented range.
void validate(const LstmHyperparams& hp);

/// Maps characters to alphabet indices. Built once per charset.
class CharEncoder {
 public:
  explicit CharEncoder(const LstmHyperparams& hp);

  /// Unknown characters become 0 (UNK); output is truncated to max_seq_len
  /// and an empty input encodes as a single UNK.
  std::vector<int> encode(std::string_view utf8_text) const;

 private:
  std::unordered_map<char32_t, int> index_;
  int max_seq_len_;
};

std::vector<int> encode_phrase(std::string_view phrase_text, const LstmHyperparams& hp);

template <typename Scalar>
struct LstmLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weights;
  Vector bias;
};

/// Trainable tensors. Also used to hold gradients of the same shape.
template <typename Scalar>
struct LstmParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix embedding;  // vocab x embed_dim
  std::vector<LstmLayer<Scalar>> layers;
  Vector head_weights;  // hidden_dim
  Vector head_bias;     // 1

  static LstmParams zeros(const LstmHyperparams& hp);

  /// Calls fn(name, Eigen::Map<Vector>) for every tensor in a fixed order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn);
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const;

  Eigen::Index size() const;
  void set_zero();
};

template <typename Scalar>
struct BasicLstmModel {
  LstmHyperparams hyperparams;
  LstmParams<Scalar> params;
  /// Build stamp of the mapping this model was trained alongside; empty
  /// when unstamped.
  std::string build_id;
};

using LstmModel = BasicLstmModel<double>;

// ---------------------------------------------------------------------------

template <typename Scalar>
LstmParams<Scalar> LstmParams<Scalar>::zeros(const LstmHyperparams& hp) {
  LstmParams p;
  const Eigen::Index hidden = hp.hidden_dim;
  p.embedding = Matrix::Zero(hp.vocab_size(), hp.embed_dim);
  p.layers.resize(static_cast<std::size_t>(hp.num_layers));
  for (int l = 0; l < hp.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? hp.embed_dim : hidden;
    p.layers[static_cast<std::size_t>(l)].weights = Matrix::Zero(4 * hidden, in + hidden);
    p.layers[static_cast<std::size_t>(l)].bias = Vector::Zero(4 * hidden);
  }
  p.head_weights = Vector::Zero(hidden);
  p.head_bias = Vector::Zero(1);
  return p;
}

template <typename Scalar>
template <typename Fn>
void LstmParams<Scalar>::for_each_tensor(Fn&& fn) {
  using Map = Eigen::Map<Vector>;
  // The map views the tensor's column-major storage.
  fn(std::string("embedding"), embedding.rows(), embedding.cols(), Map(embedding.data(), embedding.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    const std::string prefix = "layer" + std::to_string(l);
    fn(prefix + ".weights", layer.weights.rows(), layer.weights.cols(),
       Map(layer.weights.data(), layer.weights.size()));
    fn(prefix + ".bias", layer.bias.rows(), Eigen::Index{1}, Map(layer.bias.data(), layer.bias.size()));
  }
  fn(std::string("head.weights"), head_weights.rows(), Eigen::Index{1},
     Map(head_weights.data(), head_weights.size()));
  fn(std::string("head.bias"), head_bias.rows(), Eigen::Index{1}, Map(head_bias.data(), head_bias.size()));
}

template <typename Scalar>
template <typename Fn>
void LstmParams<Scalar>::for_each_tensor(Fn&& fn) const {
  const_cast<LstmParams*>(this)->for_each_tensor(
      [&](const std::string& name, Eigen::Index rows, Eigen::Index cols, Eigen::Map<Vector> map) {
        fn(name, rows, cols, Eigen::Map<const Vector>(map.data(), map.size()));
      });
}

template <typename Scalar>
Eigen::Index LstmParams<Scalar>::size() const {
  Eigen::Index total = 0;
  for_each_tensor([&](const std::string&, Eigen::Index, Eigen::Index, auto map) { total += map.size(); });
  return total;
}

template <typename Scalar>
void LstmParams<Scalar>::set_zero() {
  for_each_tensor([](const std::string&, Eigen::Index, Eigen::Index, auto map) { map.setZero(); });
}

/// Parameters flattened in for_each_tensor order.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flatten(const LstmParams<Scalar>& params) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flat(params.size());
  Eigen::Index offset = 0;
  params.for_each_tensor([&](const std::string&, Eigen::Index, Eigen::Index, auto map) {
    flat.segment(offset, map.size()) = map;
    offset += map.size();
  });
  return flat;
}

template <typename Scalar>
void unflatten(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& flat, LstmParams<Scalar>& params) {
  Eigen::Index offset = 0;
  params.for_each_tensor([&](const std::string&, Eigen::Index, Eigen::Index, auto map) {
    map = flat.segment(offset, map.size());
    offset += map.size();
  });
}

/// Uniform(-1/sqrt(H), 1/sqrt(H)) gates, forget-gate bias 1, small
/// embeddings. Draws come only from `hp.seed`.
template <typename Scalar>
LstmParams<Scalar> initialize_params(const LstmHyperparams& hp, Rng& rng) {
  auto p = LstmParams<Scalar>::zeros(hp);
  const double gate_scale = 1.0 / std::sqrt(static_cast<double>(hp.hidden_dim));
  for (Eigen::Index i = 0; i < p.embedding.size(); ++i) {
    p.embedding.data()[i] = static_cast<Scalar>(rng.uniform(-0.5, 0.5));
  }
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = static_cast<Scalar>(rng.uniform(-gate_scale, gate_scale));
    }
    layer.bias.setZero();
    layer.bias.segment(hp.hidden_dim, hp.hidden_dim).setOnes();
  }
  for (Eigen::Index i = 0; i < p.head_weights.size(); ++i) {
    p.head_weights[i] = static_cast<Scalar>(rng.uniform(-gate_scale, gate_scale));
  }
  p.head_bias.setZero();
  return p;
}

template <typename Scalar>
BasicLstmModel<Scalar> make_model(const LstmHyperparams& hp) {
  validate(hp);
  Rng rng(hp.seed);
  return {hp, initialize_params<Scalar>(hp, rng), {}};
}

namespace detail {

template <typename Scalar>
Scalar logistic(Scalar z) {
  return z >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
}

// Keeps the regression output strictly inside (0, 1) even when the logit is
// large enough for the logistic to round to an endpoint.
template <typename Scalar>
Scalar squash(Scalar z) {
  constexpr Scalar lo = std::numeric_limits<Scalar>::min();
  constexpr Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / Scalar(2);
  return std::clamp(logistic(z), lo, hi);
}

}  // namespace detail

/// Activations kept from a forward pass for backpropagation.
template <typename Scalar>
struct LstmTrace {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Layer {
    Matrix inputs;   // in x T (after dropout)
    Matrix hidden;   // H x T
    Matrix gates;    // 4H x T, activated
    Matrix cell;     // H x T
    Matrix tanh_cell;
    Matrix dropout_mask;  // in x T scale factors; empty when unused
  };

  std::vector<int> sequence;
  std::vector<Layer> layers;
  Scalar logit = 0;
  Scalar output = 0;
};

/// Runs the network. `dropout_rng` enables training-mode inverted dropout on
/// the inputs of every layer above the first; pass nullptr for inference.
template <typename Scalar>
LstmTrace<Scalar> forward_trace(const BasicLstmModel<Scalar>& model, std::span<const int> sequence,
                                Rng* dropout_rng = nullptr) {
  using Matrix = typename LstmTrace<Scalar>::Matrix;
  const auto& hp = model.hyperparams;
  const auto& p = model.params;
  if (sequence.empty()) throw Error(ErrorKind::IndexOutOfRange, "empty input sequence");
  for (int index : sequence) {
    if (index < 0 || index >= p.embedding.rows()) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "character index " + std::to_string(index) + " outside alphabet of " +
                      std::to_string(p.embedding.rows()));
    }
  }

  const Eigen::Index steps = static_cast<Eigen::Index>(sequence.size());
  const Eigen::Index hidden = hp.hidden_dim;
  const bool dropout = dropout_rng != nullptr && hp.dropout_rate > 0.0;
  const Scalar keep_scale = dropout ? Scalar(1.0 / (1.0 - hp.dropout_rate)) : Scalar(1);

  LstmTrace<Scalar> trace;
  trace.sequence.assign(sequence.begin(), sequence.end());
  trace.layers.resize(p.layers.size());

  Matrix input(p.embedding.cols(), steps);
  for (Eigen::Index t = 0; t < steps; ++t) input.col(t) = p.embedding.row(sequence[t]).transpose();

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& cache = trace.layers[l];
    const auto& layer = p.layers[l];
    if (l > 0 && dropout) {
      cache.dropout_mask.resize(input.rows(), steps);
      for (Eigen::Index i = 0; i < cache.dropout_mask.size(); ++i) {
        cache.dropout_mask.data()[i] = dropout_rng->uniform() < hp.dropout_rate ? Scalar(0) : keep_scale;
      }
      input.array() *= cache.dropout_mask.array();
    }
    const Eigen::Index in = input.rows();
    // Input contributions for all steps at once; the recurrent part is
    // added step by step.
    Matrix pre = layer.weights.leftCols(in) * input;
    pre.colwise() += layer.bias;

    cache.hidden.resize(hidden, steps);
    cache.gates.resize(4 * hidden, steps);
    cache.cell.resize(hidden, steps);
    cache.tanh_cell.resize(hidden, steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto z = pre.col(t);
      if (t > 0) z.noalias() += layer.weights.rightCols(hidden) * cache.hidden.col(t - 1);
      auto g = cache.gates.col(t);
      for (Eigen::Index k = 0; k < 4 * hidden; ++k) {
        g[k] = (k >= 2 * hidden && k < 3 * hidden) ? std::tanh(z[k]) : detail::logistic(z[k]);
      }
      auto c = cache.cell.col(t);
      c = g.segment(0, hidden).cwiseProduct(g.segment(2 * hidden, hidden));
      if (t > 0) c += g.segment(hidden, hidden).cwiseProduct(cache.cell.col(t - 1));
      cache.tanh_cell.col(t) = c.array().tanh();
      cache.hidden.col(t) = g.segment(3 * hidden, hidden).cwiseProduct(cache.tanh_cell.col(t));
    }
    cache.inputs = std::move(input);
    input = cache.hidden;
  }

  trace.logit = p.head_weights.dot(trace.layers.back().hidden.col(steps - 1)) + p.head_bias[0];
  trace.output = detail::squash(trace.logit);
  return trace;
}

/// Inference forward pass; deterministic, dropout disabled.
template <typename Scalar>
Scalar forward(const BasicLstmModel<Scalar>& model, std::span<const int> sequence) {
  return forward_trace(model, sequence).output;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
template <typename Scalar>
void backward(const BasicLstmModel<Scalar>& model, const LstmTrace<Scalar>& trace, Scalar d_output,
              LstmParams<Scalar>& grads) {
  using Matrix = typename LstmTrace<Scalar>::Matrix;
  using Vector = typename LstmParams<Scalar>::Vector;
  const auto& p = model.params;
  const Eigen::Index hidden = model.hyperparams.hidden_dim;
  const Eigen::Index steps = static_cast<Eigen::Index>(trace.sequence.size());

  const Scalar y = trace.output;
  const Scalar d_logit = d_output * y * (Scalar(1) - y);
  const auto& top = trace.layers.back();
  grads.head_weights.noalias() += d_logit * top.hidden.col(steps - 1);
  grads.head_bias[0] += d_logit;

  // Gradient arriving at each hidden state of the current layer from above.
  Matrix d_hidden_above = Matrix::Zero(hidden, steps);
  d_hidden_above.col(steps - 1) = d_logit * p.head_weights;

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& cache = trace.layers[l];
    const auto& layer = p.layers[l];
    const Eigen::Index in = cache.inputs.rows();

    Matrix d_pre(4 * hidden, steps);
    Vector d_h_next = Vector::Zero(hidden);
    Vector d_c_next = Vector::Zero(hidden);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const auto g = cache.gates.col(t);
      const auto gi = g.segment(0, hidden);
      const auto gf = g.segment(hidden, hidden);
      const auto gc = g.segment(2 * hidden, hidden);
      const auto go = g.segment(3 * hidden, hidden);
      const auto tc = cache.tanh_cell.col(t);

      const Vector dh = d_hidden_above.col(t) + d_h_next;
      const Vector dc =
          d_c_next + dh.cwiseProduct(go).cwiseProduct((Vector::Ones(hidden) - tc.cwiseProduct(tc)));

      auto dz = d_pre.col(t);
      dz.segment(0, hidden) = dc.cwiseProduct(gc).cwiseProduct(gi.cwiseProduct(Vector::Ones(hidden) - gi));
      if (t > 0) {
        dz.segment(hidden, hidden) =
            dc.cwiseProduct(cache.cell.col(t - 1)).cwiseProduct(gf.cwiseProduct(Vector::Ones(hidden) - gf));
      } else {
        dz.segment(hidden, hidden).setZero();
      }
      dz.segment(2 * hidden, hidden) = dc.cwiseProduct(gi).cwiseProduct(Vector::Ones(hidden) - gc.cwiseProduct(gc));
      dz.segment(3 * hidden, hidden) = dh.cwiseProduct(tc).cwiseProduct(go.cwiseProduct(Vector::Ones(hidden) - go));

      d_c_next = dc.cwiseProduct(gf);
      if (t > 0) {
        d_h_next.noalias() = layer.weights.rightCols(hidden).transpose() * dz;
      }
    }

    auto& g_layer = grads.layers[l];
    g_layer.weights.leftCols(in).noalias() += d_pre * cache.inputs.transpose();
    if (steps > 1) {
      g_layer.weights.rightCols(hidden).noalias() +=
          d_pre.rightCols(steps - 1) * cache.hidden.leftCols(steps - 1).transpose();
    }
    g_layer.bias.noalias() += d_pre.rowwise().sum();

    Matrix d_input = layer.weights.leftCols(in).transpose() * d_pre;
    if (cache.dropout_mask.size() > 0) d_input.array() *= cache.dropout_mask.array();

    if (l == 0) {
      for (Eigen::Index t = 0; t < steps; ++t) {
        grads.embedding.row(trace.sequence[static_cast<std::size_t>(t)]) += d_input.col(t).transpose();
      }
    } else {
      d_hidden_above = std::move(d_input);
    }
  }
}

/// Squared error of one sample and its parameter gradient.
template <typename Scalar>
Scalar loss_and_gradient(const BasicLstmModel<Scalar>& model, std::span<const int> sequence, Scalar target,
                         LstmParams<Scalar>& grads, Rng* dropout_rng = nullptr) {
  const auto trace = forward_trace(model, sequence, dropout_rng);
  const Scalar diff = trace.output - target;
  backward(model, trace, Scalar(2) * diff, grads);
  return diff * diff;
}

struct LabeledPhrase {
  std::string text;
  double open_rate = 0.0;
};

struct TrainingLog {
  double initial_loss = 0.0;        // dataset MSE before the first update
  std::vector<double> epoch_losses;  // dataset MSE (inference mode) after each epoch
};

/// Per-sample SGD on squared error with global-norm gradient clipping.
/// Initialization, shuffling and dropout masks all derive from hp.seed.
LstmModel train_lstm(std::span<const LabeledPhrase> dataset, const LstmHyperparams& hp,
                     TrainingLog* log = nullptr);

/// Inference-mode mean squared error over a dataset.
double mean_squared_error(const LstmModel& model, std::span<const LabeledPhrase> dataset);

double predict_phrase(const LstmModel& model, std::string_view phrase_text);

// ---------------------------------------------------------------------------
// Gradient verification

/// Worst deviation between analytic and central-difference derivatives of a
/// scalar function over the listed coordinates. Per coordinate the deviation
/// is |a - n| / |n| when |n| >= abs_floor, otherwise the absolute |a - n|.
double finite_difference_deviation(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                                   std::span<const Eigen::Index> coordinates, double epsilon,
                                   double abs_floor = 1e-6);

struct GradientCheckOptions {
  std::size_t samples_per_group = 16;  // coordinates drawn from each tensor group
  std::uint64_t seed = 11;
  /// Flat parameter index whose analytic gradient is doubled before the
  /// comparison; used as a negative control. It is always checked.
  std::optional<Eigen::Index> corrupt_index;
};

struct GradientCheckResult {
  double max_deviation = 0.0;
  std::size_t parameters_checked = 0;
};

/// Compares BPTT gradients of (output - target)^2 against central
/// differences for a stratified sample of embedding, gate and head
/// parameters. Dropout is disabled.
GradientCheckResult gradient_check(const LstmModel& model, const LabeledPhrase& sample, double epsilon,
                                   const GradientCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view kModelHeader = "#nlorp-lstm v1";

std::string format_model(const LstmModel& model);
LstmModel parse_model(std::string_view text, std::string_view origin = "<memory>");
void persist_model(const LstmModel& model, const std::filesystem::path& path);
LstmModel load_model(const std::filesystem::path& path);

}  // namespace nlorp
