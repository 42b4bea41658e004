#ifndef QQSE_AUGMENT_H_
#define QQSE_AUGMENT_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qqse/catalog.h"
#include "qqse/suggester.h"

namespace qqse {

enum class TemplateMode { kAdd1, kAdd2, kReplace1, kReplace2 };

const char* template_mode_name(TemplateMode mode);
TemplateMode parse_template_mode(std::string_view name);

struct MaskedTemplate {
  Tokens tokens;  // kMaskToken marks each mask
  std::string source_query_id;
  TemplateMode mode = TemplateMode::kAdd1;
  std::size_t index = 0;  // position within (source query, mode)

  std::vector<std::size_t> mask_positions() const;
  bool operator==(const MaskedTemplate&) const = default;
};

/// One template per gap (n = 1: T + 1 of them) or per unordered pair of
/// distinct gaps (n = 2: C(T + 1, 2)), in lexicographic gap order.
std::vector<MaskedTemplate> generate_add_templates(const AnnotatedQuery& query, int n_masks);

/// One template per n-subset of token positions: C(T, n). Empty when the
/// query has fewer than n tokens.
std::vector<MaskedTemplate> generate_replace_templates(const AnnotatedQuery& query, int n_masks);

/// add1, add2, replace1, replace2 for every query in order.
std::vector<MaskedTemplate> generate_all_templates(const Corpus& seeds);

enum class CandidateStatus { kPending, kAccepted, kRejected };
enum class RejectReason { kNotUnique, kNotSeRelated, kNoisy, kCqNotApplicable };

const char* reject_reason_name(RejectReason reason);
RejectReason parse_reject_reason(std::string_view name);

struct AugmentationCandidate {
  std::string id;
  Tokens tokens;
  std::string source_query_id;
  std::size_t suggester_rank = 1;
  CandidateStatus status = CandidateStatus::kPending;
  std::optional<RejectReason> reject_reason;

  bool operator==(const AugmentationCandidate&) const = default;
};

/// Fills every template's masks from the suggester. Two-mask templates pair
/// the i-th suggestion of each position. Retryable transport errors are
/// retried `max_retries` times before surfacing with the template attached.
std::vector<AugmentationCandidate> expand_templates(std::span<const MaskedTemplate> templates,
                                                    Suggester& suggester,
                                                    std::size_t top_k = kDefaultTopK,
                                                    int max_retries = 2);

/// Drops candidates equal to a corpus query or to an earlier candidate.
std::vector<AugmentationCandidate> dedupe_candidates(std::vector<AugmentationCandidate> candidates,
                                                     const Corpus& existing);

/// Seeds plus accepted candidates as augmented queries inheriting their
/// seed's valid questions. Throws while any candidate is still pending.
Corpus finalize_augmented_corpus(const Corpus& seeds,
                                 std::span<const AugmentationCandidate> reviewed);

std::string render_tokens(const Tokens& tokens);  // masks as "{mask}"

std::string serialize_templates(std::span<const MaskedTemplate> templates);
std::vector<MaskedTemplate> parse_templates(std::string_view jsonl);
std::string serialize_candidates(std::span<const AugmentationCandidate> candidates);
std::vector<AugmentationCandidate> parse_candidates(std::string_view jsonl);

}  // namespace qqse

#endif  // QQSE_AUGMENT_H_
