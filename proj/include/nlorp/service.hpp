#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "nlorp/predictor.hpp"

namespace httplib {
class Server;
}

namespace nlorp {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Read-only HTTP front end over one loaded PredictorHandle.
///
///   POST /v1/predict  {"subject_line": "..."}  -> PredictResponse
///   GET  /v1/health                            -> {"status":"ok","model_loaded":bool}
///   GET  /v1/model                             -> build id, entry counts, hyperparameters,
///                                                 training corpus mean rate when known
///
/// Errors: 400 malformed body, 422 subject line without tokens, 503 when no
/// artifacts are loaded. The handle is never mutated after construction.
class PredictionService {
 public:
  PredictionService() = default;
  explicit PredictionService(std::shared_ptr<const PredictorHandle> handle,
                             std::optional<double> corpus_mean_open_rate = std::nullopt)
      : handle_(std::move(handle)), corpus_mean_open_rate_(corpus_mean_open_rate) {}

  bool model_loaded() const { return handle_ != nullptr; }

  ServiceResponse predict(std::string_view request_body) const;
  ServiceResponse health() const;
  ServiceResponse model_info() const;

  /// Registers the endpoints; `cors` adds permissive cross-origin headers.
  void install(httplib::Server& server, bool cors) const;

 private:
  std::shared_ptr<const PredictorHandle> handle_;
  std::optional<double> corpus_mean_open_rate_;
};

/// Loads `mapping` and `model` into a handle; throws nlorp::Error.
std::shared_ptr<const PredictorHandle> load_predictor(const std::filesystem::path& mapping,
                                                      const std::filesystem::path& model);

}  // namespace nlorp
