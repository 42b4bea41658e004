#include "qqse/review.h"

#include "json.hpp"

namespace qqse {

using nlohmann::json;

std::string encode_review_decision(const ReviewDecision& d) {
  json obj = {{"candidate_id", d.candidate_id},
              {"decision", d.accept ? "accept" : "reject"},
              {"reason", d.reason ? json(reject_reason_name(*d.reason)) : json(nullptr)},
              {"ts", d.ts}};
  return obj.dump();
}

ReviewDecision decode_review_decision(std::string_view line) {
  try {
    json obj = json::parse(line);
    ReviewDecision d;
    d.candidate_id = obj.at("candidate_id").get<std::string>();
    const auto decision = obj.at("decision").get<std::string>();
    if (decision != "accept" && decision != "reject") {
      throw Error("unknown decision \"" + decision + "\"");
    }
    d.accept = decision == "accept";
    if (const auto& r = obj.at("reason"); !r.is_null()) {
      d.reason = parse_reject_reason(r.get<std::string>());
    }
    d.ts = obj.value("ts", "");
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("review journal: ") + e.what());
  }
}

namespace {

void check_decision(const AugmentationCandidate* c, const ReviewDecision& d) {
  if (c == nullptr) throw Error("review: unknown candidate " + d.candidate_id);
  if (c->status != CandidateStatus::kPending) {
    throw Error("review: candidate " + d.candidate_id + " is already decided");
  }
  if (!d.accept && !d.reason) {
    throw Error("review: rejecting " + d.candidate_id + " requires a reason");
  }
  if (d.accept && d.reason) {
    throw Error("review: accepting " + d.candidate_id + " cannot carry a reason");
  }
}

void set_status(AugmentationCandidate& c, const ReviewDecision& d) {
  c.status = d.accept ? CandidateStatus::kAccepted : CandidateStatus::kRejected;
  c.reject_reason = d.reason;
}

}  // namespace

std::vector<AugmentationCandidate> review_candidates(std::vector<AugmentationCandidate> candidates,
                                                     std::span<const ReviewDecision> decisions) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < candidates.size(); ++i) index.emplace(candidates[i].id, i);
  for (const auto& d : decisions) {
    auto it = index.find(d.candidate_id);
    AugmentationCandidate* c = it == index.end() ? nullptr : &candidates[it->second];
    check_decision(c, d);
    set_status(*c, d);
  }
  return candidates;
}

ReviewSession::ReviewSession(std::vector<AugmentationCandidate> candidates,
                             std::filesystem::path journal)
    : candidates_(std::move(candidates)), journal_path_(std::move(journal)) {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (!index_.emplace(candidates_[i].id, i).second) {
      throw Error("review: duplicate candidate id " + candidates_[i].id);
    }
  }
  if (std::filesystem::exists(journal_path_)) {
    const std::string text = read_file(journal_path_);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string_view line(text.data() + pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      try {
        apply(decode_review_decision(line));
      } catch (const Error& e) {
        throw ParseError(std::string("review journal: ") + e.what(), line_no);
      }
    }
  }
  journal_.open(journal_path_, std::ios::app);
  if (!journal_) throw Error("review: cannot open journal " + journal_path_.string());
}

void ReviewSession::apply(const ReviewDecision& d) {
  auto it = index_.find(d.candidate_id);
  AugmentationCandidate* c = it == index_.end() ? nullptr : &candidates_[it->second];
  check_decision(c, d);
  set_status(*c, d);
}

void ReviewSession::decide(ReviewDecision decision) {
  if (decision.ts.empty()) decision.ts = rfc3339_now();
  auto it = index_.find(decision.candidate_id);
  check_decision(it == index_.end() ? nullptr : &candidates_[it->second], decision);
  journal_ << encode_review_decision(decision) << '\n';
  journal_.flush();
  if (!journal_) throw Error("review: failed to append to " + journal_path_.string());
  apply(decision);
}

std::optional<std::size_t> ReviewSession::next_pending() const {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i].status == CandidateStatus::kPending) return i;
  }
  return std::nullopt;
}

std::size_t ReviewSession::pending_count() const {
  std::size_t n = 0;
  for (const auto& c : candidates_) n += c.status == CandidateStatus::kPending;
  return n;
}

}  // namespace qqse
