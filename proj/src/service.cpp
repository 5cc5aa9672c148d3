#include "nlorp/service.hpp"

#include <httplib.h>

#include "nlorp/error.hpp"
#include "nlorp/json_io.hpp"

namespace nlorp {

using nlohmann::json;

namespace {

ServiceResponse problem(int status, std::string_view kind, const std::string& message) {
  return {status, {{"error", std::string(kind)}, {"message", message}}};
}

ServiceResponse unavailable() { return problem(503, "ArtifactsNotLoaded", "no mapping/model loaded"); }

}  // namespace

ServiceResponse PredictionService::predict(std::string_view request_body) const {
  if (!handle_) return unavailable();
  const json request = json::parse(request_body, nullptr, false);
  if (request.is_discarded()) return problem(400, "MalformedJson", "request body is not valid JSON");
  if (!request.is_object()) return problem(400, "MalformedRequest", "request body must be a JSON object");
  const auto it = request.find("subject_line");
  if (it == request.end() || !it->is_string()) {
    return problem(400, "MalformedRequest", "missing string field 'subject_line'");
  }
  try {
    const auto prediction = nlorp::predict(*handle_, it->get<std::string>());
    return {200, prediction_to_json(prediction)};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptySubjectLine) return problem(422, to_string(e.kind()), e.what());
    return problem(500, to_string(e.kind()), e.what());
  }
}

ServiceResponse PredictionService::health() const {
  return {200, {{"status", "ok"}, {"model_loaded", model_loaded()}}};
}

ServiceResponse PredictionService::model_info() const {
  if (!handle_) return unavailable();
  return {200, model_info_to_json(*handle_, corpus_mean_open_rate_)};
}

void PredictionService::install(httplib::Server& server, bool cors) const {
  auto reply = [cors](httplib::Response& res, const ServiceResponse& out) {
    res.status = out.status;
    if (cors) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.set_content(out.body.dump(), "application/json");
  };

  server.Post("/v1/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, predict(req.body));
  });
  server.Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  server.Get("/v1/model", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, model_info());
  });
  if (cors) {
    server.Options(R"(/v1/.*)", [reply](const httplib::Request&, httplib::Response& res) {
      reply(res, {204, json::object()});
      res.body.clear();
    });
  }
}

std::shared_ptr<const PredictorHandle> load_predictor(const std::filesystem::path& mapping,
                                                      const std::filesystem::path& model) {
  return std::make_shared<const PredictorHandle>(load_mapping(mapping), load_model(model));
}

}  // namespace nlorp
