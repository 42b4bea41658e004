#ifndef QQSE_SERVICE_H_
#define QQSE_SERVICE_H_

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "qqse/baselines.h"
#include "qqse/catalog.h"
#include "qqse/embeddings.h"
#include "qqse/feedback.h"
#include "qqse/ranking.h"
#include "qqse/recommend.h"

namespace qqse {

struct HttpResult {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// A trained model together with the embedding table it reads.
class ServedModel : public Scorer {
 public:
  ServedModel(ModelWeights weights, EmbeddingTable table, const Catalog& catalog);
  static std::unique_ptr<ServedModel> load(const std::filesystem::path& model_path,
                                           const std::filesystem::path& embeddings_path,
                                           const Catalog& catalog);

  std::string name() const override { return scorer_->name(); }
  ScoreVector score(const Tokens& query) const override { return scorer_->score(query); }

 private:
  EmbeddingTable table_;
  std::unique_ptr<ModelScorer> scorer_;
};

/// Transport-independent request handlers for the browser extension.
///
/// /recommend is a pure function of (scorer, query). /feedback appends one
/// line to the log per accepted request.
class RecommendationService {
 public:
  RecommendationService(Catalog catalog, std::shared_ptr<const Scorer> scorer,
                        std::shared_ptr<FeedbackLog> feedback,
                        double threshold = kServingThreshold);

  /// {"query": str} -> {"recommendation": {...} | null}; 400 on a missing or
  /// empty query, 503 without a model.
  HttpResult handle_recommend(std::string_view body) const;
  /// FeedbackRecord without timestamp -> 204; 400 on invariant violations.
  HttpResult handle_feedback(std::string_view body) const;
  /// {"model_loaded": bool, "catalog_version": str}
  HttpResult handle_health() const;

  bool model_loaded() const { return scorer_ != nullptr; }
  const Catalog& catalog() const { return catalog_; }

 private:
  Catalog catalog_;
  std::shared_ptr<const Scorer> scorer_;
  std::shared_ptr<FeedbackLog> feedback_;
  double threshold_;
};

/// Bind address: $QQSE_BIND when set, otherwise `fallback`.
std::string bind_address_from_env(const std::string& fallback = "127.0.0.1");

/// HTTP/1.1 front end: POST /recommend, POST /feedback, GET /health, with
/// permissive CORS so extension origins can call it.
class HttpServer {
 public:
  explicit HttpServer(const RecommendationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Blocks serving requests until stop().
  void listen(const std::string& host, int port);
  /// Binds (port 0 picks a free port), serves on a background thread and
  /// returns the bound port.
  int start_background(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qqse

#endif  // QQSE_SERVICE_H_
