#include "qqse/augment.h"

#include <map>
#include <unordered_set>

#include "json.hpp"

namespace qqse {

using nlohmann::json;

const char* template_mode_name(TemplateMode mode) {
  switch (mode) {
    case TemplateMode::kAdd1: return "add1";
    case TemplateMode::kAdd2: return "add2";
    case TemplateMode::kReplace1: return "replace1";
    case TemplateMode::kReplace2: return "replace2";
  }
  return "?";
}

TemplateMode parse_template_mode(std::string_view name) {
  if (name == "add1") return TemplateMode::kAdd1;
  if (name == "add2") return TemplateMode::kAdd2;
  if (name == "replace1") return TemplateMode::kReplace1;
  if (name == "replace2") return TemplateMode::kReplace2;
  throw Error("unknown template mode \"" + std::string(name) + "\"");
}

const char* reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::kNotUnique: return "not_unique";
    case RejectReason::kNotSeRelated: return "not_se_related";
    case RejectReason::kNoisy: return "noisy";
    case RejectReason::kCqNotApplicable: return "cq_not_applicable";
  }
  return "?";
}

RejectReason parse_reject_reason(std::string_view name) {
  if (name == "not_unique") return RejectReason::kNotUnique;
  if (name == "not_se_related") return RejectReason::kNotSeRelated;
  if (name == "noisy") return RejectReason::kNoisy;
  if (name == "cq_not_applicable") return RejectReason::kCqNotApplicable;
  throw Error("unknown reject reason \"" + std::string(name) + "\"");
}

std::vector<std::size_t> MaskedTemplate::mask_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kMaskToken) out.push_back(i);
  }
  return out;
}

namespace {

void check_mask_count(int n_masks) {
  if (n_masks != 1 && n_masks != 2) throw Error("augment: n_masks must be 1 or 2");
}

/// Copies `tokens` with a mask inserted before each listed gap (ascending).
Tokens insert_masks(const Tokens& tokens, std::initializer_list<std::size_t> gaps) {
  Tokens out;
  out.reserve(tokens.size() + gaps.size());
  auto gap = gaps.begin();
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    while (gap != gaps.end() && *gap == i) {
      out.emplace_back(kMaskToken);
      ++gap;
    }
    if (i < tokens.size()) out.push_back(tokens[i]);
  }
  return out;
}

}  // namespace

std::vector<MaskedTemplate> generate_add_templates(const AnnotatedQuery& query, int n_masks) {
  check_mask_count(n_masks);
  const std::size_t gaps = query.tokens.size() + 1;
  std::vector<MaskedTemplate> out;
  if (n_masks == 1) {
    for (std::size_t g = 0; g < gaps; ++g) {
      out.push_back({insert_masks(query.tokens, {g}), query.id, TemplateMode::kAdd1, out.size()});
    }
  } else {
    for (std::size_t a = 0; a < gaps; ++a) {
      for (std::size_t b = a + 1; b < gaps; ++b) {
        out.push_back(
            {insert_masks(query.tokens, {a, b}), query.id, TemplateMode::kAdd2, out.size()});
      }
    }
  }
  return out;
}

std::vector<MaskedTemplate> generate_replace_templates(const AnnotatedQuery& query, int n_masks) {
  check_mask_count(n_masks);
  const std::size_t n = query.tokens.size();
  std::vector<MaskedTemplate> out;
  if (n_masks == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      Tokens t = query.tokens;
      t[i] = kMaskToken;
      out.push_back({std::move(t), query.id, TemplateMode::kReplace1, out.size()});
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        Tokens t = query.tokens;
        t[i] = kMaskToken;
        t[j] = kMaskToken;
        out.push_back({std::move(t), query.id, TemplateMode::kReplace2, out.size()});
      }
    }
  }
  return out;
}

std::vector<MaskedTemplate> generate_all_templates(const Corpus& seeds) {
  std::vector<MaskedTemplate> out;
  for (const auto& q : seeds.queries()) {
    for (int n : {1, 2}) {
      for (auto& t : generate_add_templates(q, n)) out.push_back(std::move(t));
    }
    for (int n : {1, 2}) {
      for (auto& t : generate_replace_templates(q, n)) out.push_back(std::move(t));
    }
  }
  return out;
}

namespace {

std::string candidate_id(const MaskedTemplate& t, std::size_t rank) {
  return t.source_query_id + ":" + template_mode_name(t.mode) + ":" + std::to_string(t.index) +
         ":" + std::to_string(rank);
}

SuggesterResponse suggest_with_retry(Suggester& suggester, const SuggesterRequest& request,
                                     const MaskedTemplate& t, int max_retries) {
  for (int attempt = 0;; ++attempt) {
    try {
      return suggester.suggest(request);
    } catch (const SuggesterError& e) {
      if (e.retryable() && attempt < max_retries) continue;
      throw SuggesterError("suggester failed for template \"" + render_tokens(t.tokens) +
                               "\" (source " + t.source_query_id + ", " +
                               template_mode_name(t.mode) + " #" + std::to_string(t.index) +
                               "): " + e.what(),
                           e.retryable());
    }
  }
}

}  // namespace

std::vector<AugmentationCandidate> expand_templates(std::span<const MaskedTemplate> templates,
                                                    Suggester& suggester, std::size_t top_k,
                                                    int max_retries) {
  std::vector<AugmentationCandidate> out;
  for (const auto& t : templates) {
    const auto positions = t.mask_positions();
    if (positions.empty()) throw Error("expand_templates: template without a mask");
    const SuggesterRequest request{t.tokens, positions, top_k};
    const SuggesterResponse response = suggest_with_retry(suggester, request, t, max_retries);
    if (response.suggestions.size() != positions.size()) {
      throw SuggesterError("suggester returned " + std::to_string(response.suggestions.size()) +
                               " lists for " + std::to_string(positions.size()) + " masks",
                           false);
    }
    std::size_t depth = top_k;
    for (const auto& list : response.suggestions) depth = std::min(depth, list.size());

    for (std::size_t rank = 0; rank < depth; ++rank) {
      Tokens filled;
      bool usable = true;
      std::size_t next_mask = 0;
      for (std::size_t i = 0; i < t.tokens.size(); ++i) {
        if (next_mask < positions.size() && positions[next_mask] == i) {
          Tokens words = tokenize(response.suggestions[next_mask][rank]);
          if (words.empty()) usable = false;
          filled.insert(filled.end(), words.begin(), words.end());
          ++next_mask;
        } else {
          filled.push_back(t.tokens[i]);
        }
      }
      if (!usable) continue;
      AugmentationCandidate c;
      c.id = candidate_id(t, rank + 1);
      c.tokens = std::move(filled);
      c.source_query_id = t.source_query_id;
      c.suggester_rank = rank + 1;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<AugmentationCandidate> dedupe_candidates(std::vector<AugmentationCandidate> candidates,
                                                     const Corpus& existing) {
  std::unordered_set<std::string> seen;
  for (const auto& q : existing.queries()) seen.insert(join_tokens(q.tokens, "\x1f"));
  std::vector<AugmentationCandidate> out;
  for (auto& c : candidates) {
    if (seen.insert(join_tokens(c.tokens, "\x1f")).second) out.push_back(std::move(c));
  }
  return out;
}

Corpus finalize_augmented_corpus(const Corpus& seeds,
                                 std::span<const AugmentationCandidate> reviewed) {
  std::map<std::string, const AnnotatedQuery*> by_id;
  for (const auto& q : seeds.queries()) by_id.emplace(q.id, &q);

  std::vector<AnnotatedQuery> queries = seeds.queries();
  for (const auto& c : reviewed) {
    if (c.status == CandidateStatus::kPending) {
      throw Error("finalize: candidate " + c.id + " is still pending review");
    }
    if (c.status != CandidateStatus::kAccepted) continue;
    auto it = by_id.find(c.source_query_id);
    if (it == by_id.end()) {
      throw Error("finalize: candidate " + c.id + " refers to unknown query " + c.source_query_id);
    }
    AnnotatedQuery q;
    q.id = c.id;
    q.tokens = c.tokens;
    q.valid_cq_ids = it->second->valid_cq_ids;
    q.origin = Origin::kAugmented;
    q.seed_id = it->second->seed_id;
    queries.push_back(std::move(q));
  }
  return Corpus(std::move(queries), seeds.catalog_version());
}

std::string render_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i] == kMaskToken ? std::string(kMaskText) : tokens[i];
  }
  return out;
}

namespace {

json rendered_tokens(const Tokens& tokens) {
  json arr = json::array();
  for (const auto& t : tokens) arr.push_back(t == kMaskToken ? std::string(kMaskText) : t);
  return arr;
}

Tokens internal_tokens(const json& arr) {
  Tokens out;
  for (const auto& t : arr) {
    auto s = t.get<std::string>();
    out.push_back(s == kMaskText ? std::string(kMaskToken) : std::move(s));
  }
  return out;
}

template <typename F>
void for_each_line(std::string_view text, const char* what, F&& f) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(std::string(what) + ": " + e.what(), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(std::string(what) + ": " + e.what(), line_no);
    }
  }
}

const char* status_name(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::kPending: return "pending";
    case CandidateStatus::kAccepted: return "accepted";
    case CandidateStatus::kRejected: return "rejected";
  }
  return "?";
}

CandidateStatus parse_status(const std::string& s) {
  if (s == "pending") return CandidateStatus::kPending;
  if (s == "accepted") return CandidateStatus::kAccepted;
  if (s == "rejected") return CandidateStatus::kRejected;
  throw Error("unknown candidate status \"" + s + "\"");
}

}  // namespace

std::string serialize_templates(std::span<const MaskedTemplate> templates) {
  std::string out;
  for (const auto& t : templates) {
    json obj = {{"source_query_id", t.source_query_id},
                {"mode", template_mode_name(t.mode)},
                {"index", t.index},
                {"tokens", rendered_tokens(t.tokens)}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<MaskedTemplate> parse_templates(std::string_view jsonl) {
  std::vector<MaskedTemplate> out;
  for_each_line(jsonl, "templates", [&](const json& obj) {
    MaskedTemplate t;
    t.source_query_id = obj.at("source_query_id").get<std::string>();
    t.mode = parse_template_mode(obj.at("mode").get<std::string>());
    t.index = obj.at("index").get<std::size_t>();
    t.tokens = internal_tokens(obj.at("tokens"));
    const std::size_t expected =
        (t.mode == TemplateMode::kAdd1 || t.mode == TemplateMode::kReplace1) ? 1 : 2;
    if (t.mask_positions().size() != expected) {
      throw Error("template mask count does not match its mode");
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::string serialize_candidates(std::span<const AugmentationCandidate> candidates) {
  std::string out;
  for (const auto& c : candidates) {
    json obj = {{"id", c.id},
                {"tokens", c.tokens},
                {"source_query_id", c.source_query_id},
                {"suggester_rank", c.suggester_rank},
                {"status", status_name(c.status)},
                {"reject_reason",
                 c.reject_reason ? json(reject_reason_name(*c.reject_reason)) : json(nullptr)}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<AugmentationCandidate> parse_candidates(std::string_view jsonl) {
  std::vector<AugmentationCandidate> out;
  for_each_line(jsonl, "candidates", [&](const json& obj) {
    AugmentationCandidate c;
    c.id = obj.at("id").get<std::string>();
    c.tokens = obj.at("tokens").get<Tokens>();
    c.source_query_id = obj.at("source_query_id").get<std::string>();
    c.suggester_rank = obj.at("suggester_rank").get<std::size_t>();
    c.status = parse_status(obj.value("status", "pending"));
    if (auto it = obj.find("reject_reason"); it != obj.end() && !it->is_null()) {
      c.reject_reason = parse_reject_reason(it->get<std::string>());
    }
    out.push_back(std::move(c));
  });
  return out;
}

}  // namespace qqse
