#pragma once

#include <optional>

#include <json.hpp>

#include "nlorp/evaluation.hpp"
#include "nlorp/predictor.hpp"

namespace nlorp {

/// Rounds to 6 fractional digits, the precision rates carry on the wire.
double wire_rate(double rate);

/// PredictResponse shape shared by `/v1/predict` and `nlorp predict --json`.
nlohmann::json prediction_to_json(const Prediction& prediction);

/// `corpus_mean_open_rate` is null when the training corpus mean is unknown.
nlohmann::json model_info_to_json(const PredictorHandle& handle,
                                  std::optional<double> corpus_mean_open_rate = std::nullopt);

nlohmann::json hyperparams_to_json(const LstmHyperparams& hp);

/// Report document with chart-ready group data.
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace nlorp
