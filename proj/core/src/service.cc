#include "qqse/service.h"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "qqse/model.h"

namespace qqse {

using nlohmann::json;

namespace {

HttpResult error_result(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

}  // namespace

ServedModel::ServedModel(ModelWeights weights, EmbeddingTable table, const Catalog& catalog)
    : table_(std::move(table)),
      scorer_(std::make_unique<ModelScorer>(std::move(weights), table_, catalog)) {}

std::unique_ptr<ServedModel> ServedModel::load(const std::filesystem::path& model_path,
                                               const std::filesystem::path& embeddings_path,
                                               const Catalog& catalog) {
  ModelWeights weights = load_model(model_path);
  EmbeddingTable table = load_embeddings(embeddings_path, weights.embedding_dim());
  return std::make_unique<ServedModel>(std::move(weights), std::move(table), catalog);
}

RecommendationService::RecommendationService(Catalog catalog,
                                             std::shared_ptr<const Scorer> scorer,
                                             std::shared_ptr<FeedbackLog> feedback,
                                             double threshold)
    : catalog_(std::move(catalog)),
      scorer_(std::move(scorer)),
      feedback_(std::move(feedback)),
      threshold_(threshold) {}

HttpResult RecommendationService::handle_recommend(std::string_view body) const {
  std::string query;
  try {
    json req = json::parse(body);
    if (!req.is_object() || !req.contains("query") || !req["query"].is_string()) {
      return error_result(400, "request must be {\"query\": string}");
    }
    query = req["query"].get<std::string>();
  } catch (const json::exception&) {
    return error_result(400, "request body is not valid JSON");
  }
  if (query.find_first_not_of(" \t\r\n") == std::string::npos) {
    return error_result(400, "query is empty");
  }
  if (!scorer_) return error_result(503, "model not loaded");

  const auto ranked = rank_questions(*scorer_, tokenize(query));
  const auto rec = top_recommendation(ranked, catalog_, threshold_);
  json out;
  if (rec) {
    out["recommendation"] = {{"cq_id", rec->cq_id},
                             {"question", rec->question},
                             {"answers", rec->answers},
                             {"score", rec->score}};
  } else {
    out["recommendation"] = nullptr;
  }
  return {200, out.dump()};
}

HttpResult RecommendationService::handle_feedback(std::string_view body) const {
  FeedbackRecord record;
  try {
    record = parse_feedback_request(body);
  } catch (const Error& e) {
    return error_result(400, e.what());
  }
  if (!feedback_) return error_result(503, "feedback log not configured");
  record.timestamp = rfc3339_now();
  try {
    feedback_->append(record);
  } catch (const Error& e) {
    return error_result(500, e.what());
  }
  return {204, "", ""};
}

HttpResult RecommendationService::handle_health() const {
  return {200, json{{"model_loaded", model_loaded()}, {"catalog_version", catalog_.version()}}
                   .dump()};
}

std::string bind_address_from_env(const std::string& fallback) {
  const char* bind = std::getenv("QQSE_BIND");
  return bind && *bind ? std::string(bind) : fallback;
}

struct HttpServer::Impl {
  const RecommendationService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(const RecommendationService& s) : service(s) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    auto reply = [](httplib::Response& res, const HttpResult& r) {
      res.status = r.status;
      if (!r.body.empty()) res.set_content(r.body, r.content_type);
    };
    server.Post("/recommend", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.handle_recommend(req.body));
    });
    server.Post("/feedback", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.handle_feedback(req.body));
    });
    server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, service.handle_health());
    });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
  }
};

HttpServer::HttpServer(const RecommendationService& service)
    : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

int HttpServer::start_background(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace qqse
