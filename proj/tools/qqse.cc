// qqse: command line front end for augmentation, training, evaluation,
// recommendation and the serving API.
#include <cstdio>
#include <csignal>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "qqse/augment.h"
#include "qqse/baselines.h"
#include "qqse/review.h"
#include "qqse/service.h"
#include "qqse/trainer.h"

namespace {

using namespace qqse;

struct Common {
  std::string catalog;

  Catalog load() const {
    return load_catalog(catalog.empty() ? default_catalog_path() : std::filesystem::path(catalog));
  }
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    write_file_atomic(path, text);
  }
}

std::unique_ptr<Suggester> make_suggester(const std::string& command, const std::string& url) {
  if (!command.empty() && !url.empty()) throw Error("give either --suggester-cmd or --suggester-url");
  if (!command.empty()) return std::make_unique<ProcessSuggester>(command);
  if (!url.empty()) return std::make_unique<HttpSuggester>(url);
  throw Error("a suggester is required (--suggester-cmd or --suggester-url)");
}

// ---------------------------------------------------------------------------
// augment

void add_augment(CLI::App& app) {
  auto* augment = app.add_subcommand("augment", "Grow a seed corpus with masked-term suggestions");
  augment->require_subcommand(1);

  {
    auto* gen = augment->add_subcommand("gen", "Write masked templates for every seed query");
    auto seeds = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    gen->add_option("--seeds", *seeds, "Seed corpus (JSONL)")->required();
    gen->add_option("--out", *out, "Templates output (JSONL); stdout when omitted");
    gen->callback([seeds, out] {
      const auto templates = generate_all_templates(load_corpus(*seeds));
      write_or_print(*out, serialize_templates(templates));
      std::fprintf(stderr, "%zu templates\n", templates.size());
    });
  }

  {
    auto* expand = augment->add_subcommand("expand", "Fill templates from a suggester backend");
    struct Opts {
      std::string templates, seeds, out, command, url;
      std::size_t top_k = kDefaultTopK;
      int retries = 2;
    };
    auto o = std::make_shared<Opts>();
    expand->add_option("--templates", o->templates, "Templates (JSONL)")->required();
    expand->add_option("--seeds", o->seeds, "Seed corpus; candidates equal to a seed are dropped");
    expand->add_option("--out", o->out, "Candidates output (JSONL)")->required();
    expand->add_option("--suggester-cmd", o->command, "Subprocess speaking NDJSON on stdin/stdout");
    expand->add_option("--suggester-url", o->url, "HTTP endpoint accepting the same JSON");
    expand->add_option("--top-k", o->top_k, "Suggestions per mask")->capture_default_str();
    expand->add_option("--retries", o->retries, "Retries for transient failures")->capture_default_str();
    expand->callback([o] {
      const auto templates = parse_templates(read_file(o->templates));
      auto suggester = make_suggester(o->command, o->url);
      auto candidates = expand_templates(templates, *suggester, o->top_k, o->retries);
      const std::size_t raw = candidates.size();
      candidates = dedupe_candidates(std::move(candidates),
                                     o->seeds.empty() ? Corpus() : load_corpus(o->seeds));
      write_file_atomic(o->out, serialize_candidates(candidates));
      std::fprintf(stderr, "%zu candidates (%zu before dedupe)\n", candidates.size(), raw);
    });
  }

  {
    auto* review = augment->add_subcommand("review", "Accept or reject pending candidates");
    auto candidates = std::make_shared<std::string>();
    auto journal = std::make_shared<std::string>();
    review->add_option("--candidates", *candidates, "Candidates (JSONL)")->required();
    review->add_option("--journal", *journal, "Decision journal; resumed when present")->required();
    review->callback([candidates, journal] {
      ReviewSession session(parse_candidates(read_file(*candidates)), *journal);
      std::printf("%zu pending. a = accept, u = not unique, s = not SE-related, n = noisy,\n"
                  "c = question not applicable, q = quit\n",
                  session.pending_count());
      while (auto next = session.next_pending()) {
        const auto& c = session.candidates()[*next];
        std::printf("\n[%zu left] %s\n  from %s (rank %zu)\n> ", session.pending_count(),
                    join_tokens(c.tokens).c_str(), c.source_query_id.c_str(), c.suggester_rank);
        std::fflush(stdout);
        std::string answer;
        if (!std::getline(std::cin, answer) || answer == "q") break;
        ReviewDecision d{c.id, false, std::nullopt, ""};
        if (answer == "a") {
          d.accept = true;
        } else if (answer == "u") {
          d.reason = RejectReason::kNotUnique;
        } else if (answer == "s") {
          d.reason = RejectReason::kNotSeRelated;
        } else if (answer == "n") {
          d.reason = RejectReason::kNoisy;
        } else if (answer == "c") {
          d.reason = RejectReason::kCqNotApplicable;
        } else {
          std::printf("unrecognized choice\n");
          continue;
        }
        session.decide(d);
      }
      std::printf("%zu pending\n", session.pending_count());
    });
  }

  {
    auto* finalize = augment->add_subcommand("finalize", "Merge accepted candidates into a corpus");
    struct Opts {
      std::string seeds, candidates, journal, out;
    };
    auto o = std::make_shared<Opts>();
    finalize->add_option("--seeds", o->seeds, "Seed corpus (JSONL)")->required();
    finalize->add_option("--candidates", o->candidates, "Candidates (JSONL)")->required();
    finalize->add_option("--journal", o->journal, "Decision journal to apply");
    finalize->add_option("--out", o->out, "Augmented corpus output (JSONL)")->required();
    finalize->callback([o] {
      const Corpus seeds = load_corpus(o->seeds);
      auto candidates = parse_candidates(read_file(o->candidates));
      if (!o->journal.empty()) {
        candidates = ReviewSession(std::move(candidates), o->journal).candidates();
      }
      const Corpus corpus = finalize_augmented_corpus(seeds, candidates);
      save_corpus(corpus, o->out);
      std::fprintf(stderr, "%zu queries (%zu seeds)\n", corpus.size(), seeds.size());
    });
  }
}

// ---------------------------------------------------------------------------
// train / eval

struct SplitOpts {
  double train_fraction = 1.0;
  std::uint64_t seed = 0;
  bool seed_groups = false;

  void add(CLI::App* app) {
    app->add_option("--train-fraction", train_fraction, "Fraction of queries used for training")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--split-seed", seed, "Seed of the train/test split")->capture_default_str();
    app->add_flag("--seed-groups", seed_groups, "Keep augmented variants with their seed query");
  }

  std::pair<Corpus, Corpus> split(const Corpus& corpus) const {
    if (train_fraction >= 1.0) return {corpus, Corpus()};
    return split_corpus(corpus, train_fraction, seed,
                        seed_groups ? SplitMode::kSeedGroup : SplitMode::kQuery);
  }
};

void add_train(CLI::App& app, Common& common) {
  auto* train_cmd = app.add_subcommand("train", "Train the ranker");
  struct Opts {
    std::string corpus, embeddings, config, out, report;
    bool query_only = false;
    SplitOpts split;
  };
  auto o = std::make_shared<Opts>();
  train_cmd->add_option("--corpus", o->corpus, "Annotated corpus (JSONL)")->required();
  train_cmd->add_option("--embeddings", o->embeddings, "GloVe text file")->required();
  train_cmd->add_option("--config", o->config, "Hyperparameters (JSON); defaults otherwise");
  train_cmd->add_option("--out", o->out, "Model file to write")->required();
  train_cmd->add_option("--report", o->report, "Training report (JSON)");
  train_cmd->add_flag("--query-only", o->query_only, "Train the query-only ablation");
  o->split.add(train_cmd);
  train_cmd->callback([o, &common] {
    const Catalog catalog = common.load();
    HyperParams hp = o->config.empty() ? HyperParams{} : hyperparams_from_json(read_file(o->config));
    if (o->query_only) hp = query_only_hyperparams(hp);
    const auto table = load_embeddings(o->embeddings);
    const auto [train_set, test_set] = o->split.split(load_corpus(o->corpus));
    TrainOptions options;
    options.on_epoch = [](const EpochStats& s) {
      std::fprintf(stderr, "epoch %zu  train %.5f  validation %.5f\n", s.epoch, s.train_loss,
                   s.validation_loss);
    };
    const auto result = train<float>(train_set, catalog, table, hp, options);
    save_model(result.weights, o->out);
    if (!o->report.empty()) write_file_atomic(o->report, train_report_to_json(result.report));
    std::fprintf(stderr, "best epoch %zu of %zu, %zu training queries, %.1f s\n",
                 result.report.best_epoch, result.report.stopping_epoch, train_set.size(),
                 result.report.wall_seconds);
  });
}

void add_eval(CLI::App& app, Common& common) {
  auto* eval = app.add_subcommand("eval", "Evaluate the ranker and baselines on a test split");
  struct Opts {
    std::vector<std::string> models;
    std::string embeddings, corpus, json_out;
    std::vector<std::string> baselines;
    double threshold = 0.5;
    std::uint64_t random_seed = 0;
    SplitOpts split;
  };
  auto o = std::make_shared<Opts>();
  o->split.train_fraction = 0.8;
  eval->add_option("--model", o->models, "Model file; repeat to compare several");
  eval->add_option("--embeddings", o->embeddings, "GloVe text file")->required();
  eval->add_option("--corpus", o->corpus, "Annotated corpus (JSONL)")->required();
  eval->add_option("--baseline", o->baselines,
                   "similar, dissimilar or random; repeat for several")
      ->check(CLI::IsMember({"similar", "dissimilar", "random"}));
  eval->add_option("--threshold", o->threshold, "Similarity threshold delta")->capture_default_str();
  eval->add_option("--random-seed", o->random_seed, "Seed of the random baseline")
      ->capture_default_str();
  eval->add_option("--json", o->json_out, "Write the reports as JSON here");
  o->split.add(eval);
  eval->callback([o, &common] {
    const Catalog catalog = common.load();
    std::optional<std::size_t> dim;
    std::vector<ModelWeights> weights;
    for (const auto& path : o->models) {
      weights.push_back(load_model(path));
      dim = weights.back().embedding_dim();
    }
    const auto table = load_embeddings(o->embeddings, dim);
    const Corpus test = o->split.split(load_corpus(o->corpus)).second;
    if (test.empty()) throw Error("eval: the test split is empty");

    std::vector<std::unique_ptr<Scorer>> scorers;
    for (auto& w : weights) scorers.push_back(std::make_unique<ModelScorer>(std::move(w), table, catalog));
    for (const auto& b : o->baselines) {
      if (b == "random") {
        scorers.push_back(std::make_unique<RandomScorer>(o->random_seed));
      } else {
        scorers.push_back(std::make_unique<EmbeddingSimilarityScorer>(
            table, catalog, b == "similar" ? SimilarityMode::kSimilar : SimilarityMode::kDissimilar,
            o->threshold));
      }
    }
    if (scorers.empty()) throw Error("eval: nothing to evaluate (give --model or --baseline)");
    std::vector<EvalReport> reports;
    for (const auto& s : scorers) reports.push_back(evaluate(*s, test));
    std::fputs(format_eval_table(reports).c_str(), stdout);
    if (!o->json_out.empty()) write_or_print(o->json_out, eval_reports_to_json(reports) + "\n");
  });
}

// ---------------------------------------------------------------------------
// recommend / serve / feedback-summary

void add_recommend(CLI::App& app, Common& common) {
  auto* rec = app.add_subcommand("recommend", "Rank clarification questions for a query");
  struct Opts {
    std::string model, embeddings, query;
    double threshold = kServingThreshold;
  };
  auto o = std::make_shared<Opts>();
  rec->add_option("query", o->query, "Search query")->required();
  rec->add_option("--model", o->model, "Model file")->required();
  rec->add_option("--embeddings", o->embeddings, "GloVe text file")->required();
  rec->add_option("--threshold", o->threshold, "Serving threshold")->capture_default_str();
  rec->callback([o, &common] {
    const Catalog catalog = common.load();
    const auto served = ServedModel::load(o->model, o->embeddings, catalog);
    const auto ranked = rank_questions(*served, tokenize(o->query));
    const auto top = top_recommendation(ranked, catalog, o->threshold);
    for (const auto& r : ranked) {
      const bool mark = top && top->cq_id == r.cq_id;
      std::printf("%s %2d  %.4f  %s\n", mark ? "*" : " ", r.cq_id, r.score,
                  catalog.at(r.cq_id).text.c_str());
    }
    if (!top) std::printf("no question served (all scores below %.2f)\n", o->threshold);
  });
}

HttpServer* g_server = nullptr;

void add_serve(CLI::App& app, Common& common) {
  auto* serve = app.add_subcommand("serve", "Run the HTTP recommendation API");
  struct Opts {
    std::string model, embeddings, feedback_log;
    int port = 8080;
  };
  auto o = std::make_shared<Opts>();
  serve->add_option("--model", o->model, "Model file")->required();
  serve->add_option("--embeddings", o->embeddings, "GloVe text file")->required();
  serve->add_option("--port", o->port, "TCP port")->capture_default_str();
  serve->add_option("--feedback-log", o->feedback_log, "Feedback JSONL log")->required();
  serve->callback([o, &common] {
    const Catalog catalog = common.load();
    std::shared_ptr<const Scorer> model = ServedModel::load(o->model, o->embeddings, catalog);
    auto log = std::make_shared<FeedbackLog>(o->feedback_log);
    const RecommendationService service(catalog, model, log);
    HttpServer server(service);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    const std::string host = bind_address_from_env();
    std::fprintf(stderr, "serving %s on %s:%d\n", model->name().c_str(), host.c_str(), o->port);
    server.listen(host, o->port);
    g_server = nullptr;
  });
}

void add_feedback_summary(CLI::App& app) {
  auto* cmd = app.add_subcommand("feedback-summary", "Tally relevance and usefulness feedback");
  auto log = std::make_shared<std::string>();
  cmd->add_option("--log", *log, "Feedback JSONL log")->required();
  cmd->callback([log] {
    const auto s = feedback_summary(*log);
    std::printf("%s\n", feedback_summary_to_json(s).c_str());
    if (s.malformed_lines > 0) std::fprintf(stderr, "warning: %zu malformed lines skipped\n", s.malformed_lines);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clarification question recommendation for developer search queries"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--catalog", common.catalog, "Catalog JSON; the shipped catalog by default");
  add_augment(app);
  add_train(app, common);
  add_eval(app, common);
  add_recommend(app, common);
  add_serve(app, common);
  add_feedback_summary(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const qqse::Error& e) {
    std::fprintf(stderr, "qqse: %s\n", e.what());
    return 1;
  }
  return 0;
}
