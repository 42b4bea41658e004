#ifndef QQSE_REVIEW_H_
#define QQSE_REVIEW_H_

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qqse/augment.h"

namespace qqse {

struct ReviewDecision {
  std::string candidate_id;
  bool accept = false;
  std::optional<RejectReason> reason;  // required when rejecting
  std::string ts;                      // RFC3339; filled in when empty
};

/// {"candidate_id", "decision": "accept"|"reject", "reason": str|null, "ts"}
std::string encode_review_decision(const ReviewDecision& decision);
ReviewDecision decode_review_decision(std::string_view json_line);

/// Applies decisions in order. Throws on an unknown id, a candidate that is
/// already decided, or a rejection without a reason.
std::vector<AugmentationCandidate> review_candidates(std::vector<AugmentationCandidate> candidates,
                                                     std::span<const ReviewDecision> decisions);

/// Review backed by an append-only JSONL journal. Constructing a session
/// replays any existing journal, so an interrupted review resumes where it
/// stopped.
class ReviewSession {
 public:
  ReviewSession(std::vector<AugmentationCandidate> candidates, std::filesystem::path journal);

  /// Validates, persists, then applies the decision.
  void decide(ReviewDecision decision);

  const std::vector<AugmentationCandidate>& candidates() const { return candidates_; }
  /// Index of the next pending candidate, if any.
  std::optional<std::size_t> next_pending() const;
  std::size_t pending_count() const;

 private:
  void apply(const ReviewDecision& decision);

  std::vector<AugmentationCandidate> candidates_;
  std::unordered_map<std::string, std::size_t> index_;
  std::filesystem::path journal_path_;
  std::ofstream journal_;
};

}  // namespace qqse

#endif  // QQSE_REVIEW_H_
