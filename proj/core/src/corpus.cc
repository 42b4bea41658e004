#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "qqse/catalog.h"
#include "qqse/util.h"

namespace qqse {

using nlohmann::json;

namespace {

std::string tokens_key(const Tokens& tokens) { return join_tokens(tokens, "\x1f"); }

const char* origin_name(Origin origin) {
  return origin == Origin::kSeed ? "seed" : "augmented";
}

Origin parse_origin(const std::string& name) {
  if (name == "seed") return Origin::kSeed;
  if (name == "augmented") return Origin::kAugmented;
  throw Error("unknown origin \"" + name + "\"");
}

}  // namespace

void validate_query(const AnnotatedQuery& query, bool allow_unlabeled) {
  if (query.id.empty()) throw Error("query has an empty id");
  if (query.tokens.empty()) throw Error("query " + query.id + " has no tokens");
  for (const auto& t : query.tokens) {
    if (t.empty()) throw Error("query " + query.id + " contains an empty token");
    if (t.find_first_of(" \t\r\n\v\f") != std::string::npos) {
      throw Error("query " + query.id + " token contains whitespace: \"" + t + "\"");
    }
  }
  for (int id : query.valid_cq_ids) {
    if (id < 1 || id > kNumQuestions) {
      throw Error("query " + query.id + ": cq id " + std::to_string(id) + " out of range");
    }
  }
  if (!allow_unlabeled && query.origin == Origin::kSeed && query.valid_cq_ids.empty()) {
    throw Error("seed query " + query.id + " has no valid clarification question");
  }
  if (query.origin == Origin::kSeed && query.seed_id != query.id) {
    throw Error("seed query " + query.id + " must have seed_id equal to its id");
  }
}

Corpus::Corpus(std::vector<AnnotatedQuery> queries, std::string catalog_version,
               bool allow_unlabeled)
    : queries_(std::move(queries)), catalog_version_(std::move(catalog_version)) {
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> sequences;
  for (const auto& q : queries_) {
    validate_query(q, allow_unlabeled);
    if (!ids.insert(q.id).second) throw Error("duplicate query id " + q.id);
    if (!sequences.insert(tokens_key(q.tokens)).second) {
      throw Error("duplicate query tokens \"" + join_tokens(q.tokens) + "\" (id " + q.id + ")");
    }
  }
}

bool Corpus::contains_tokens(const Tokens& tokens) const {
  return std::any_of(queries_.begin(), queries_.end(),
                     [&](const AnnotatedQuery& q) { return q.tokens == tokens; });
}

Corpus parse_corpus(std::string_view jsonl) {
  std::vector<AnnotatedQuery> queries;
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> sequences;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    AnnotatedQuery q;
    try {
      json obj = json::parse(line);
      q.id = obj.at("id").get<std::string>();
      q.tokens = obj.at("tokens").get<Tokens>();
      for (int id : obj.at("valid_cq_ids").get<std::vector<int>>()) q.valid_cq_ids.insert(id);
      q.origin = parse_origin(obj.at("origin").get<std::string>());
      q.seed_id = obj.at("seed_id").get<std::string>();
      validate_query(q, /*allow_unlabeled=*/false);
    } catch (const json::exception& e) {
      throw ParseError(std::string("corpus: ") + e.what(), line_no);
    } catch (const Error& e) {
      throw ParseError(std::string("corpus: ") + e.what(), line_no);
    }
    if (!ids.insert(q.id).second) throw ParseError("corpus: duplicate query id " + q.id, line_no);
    if (!sequences.insert(tokens_key(q.tokens)).second) {
      throw ParseError("corpus: duplicate query tokens \"" + join_tokens(q.tokens) + "\"", line_no);
    }
    queries.push_back(std::move(q));
  }
  return Corpus(std::move(queries));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& q : corpus.queries()) {
    json obj = {{"id", q.id},
                {"tokens", q.tokens},
                {"valid_cq_ids", std::vector<int>(q.valid_cq_ids.begin(), q.valid_cq_ids.end())},
                {"origin", origin_name(q.origin)},
                {"seed_id", q.seed_id}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

std::vector<Triplet> make_triplets(const Corpus& corpus, const Catalog& catalog) {
  if (catalog.size() != kNumQuestions) throw Error("make_triplets: catalog must have 16 entries");
  std::vector<Triplet> out;
  out.reserve(corpus.size() * kNumQuestions);
  for (const auto& q : corpus.queries()) {
    for (const auto& cq : catalog) {
      out.push_back({&q, &cq, q.valid_cq_ids.contains(cq.id) ? 1 : 0});
    }
  }
  return out;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed, SplitMode mode) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("split_corpus: train fraction must be in (0, 1)");
  }
  if (corpus.empty()) throw Error("split_corpus: corpus is empty");

  const std::size_t n = corpus.size();
  // std::round rounds half away from zero.
  const auto target = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(n)));

  // Groups of query indices; one group per query unless grouping by seed.
  std::vector<std::vector<std::size_t>> groups;
  if (mode == SplitMode::kQuery) {
    for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  } else {
    std::map<std::string, std::size_t> group_of;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& q = corpus.queries()[i];
      auto [it, inserted] = group_of.try_emplace(q.seed_id, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }

  Rng rng(seed);
  rng.shuffle(std::span(groups));

  std::vector<bool> in_train(n, false);
  std::size_t assigned = 0;
  for (const auto& g : groups) {
    if (assigned >= target) break;
    for (std::size_t i : g) in_train[i] = true;
    assigned += g.size();
  }

  std::vector<AnnotatedQuery> train;
  std::vector<AnnotatedQuery> test;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).push_back(corpus.queries()[i]);
  }
  return {Corpus(std::move(train), corpus.catalog_version()),
          Corpus(std::move(test), corpus.catalog_version())};
}

}  // namespace qqse
