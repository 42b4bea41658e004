#ifndef QQSE_FEEDBACK_H_
#define QQSE_FEEDBACK_H_

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

namespace qqse {

enum class FeedbackEvent { kNotRelevant, kUpdated };

/// One plugin interaction: the user either dismissed the question as not
/// relevant or updated the query with an answer (optionally followed by the
/// usefulness answer).
struct FeedbackRecord {
  std::string timestamp;  // RFC3339, set by the server
  std::string query;
  int cq_id = 0;
  FeedbackEvent event = FeedbackEvent::kNotRelevant;
  std::optional<std::string> answer;
  std::optional<bool> useful;

  bool operator==(const FeedbackRecord&) const = default;
};

/// Throws Error when an invariant is violated: empty query, cq id outside
/// 1..16, a not_relevant event carrying an answer or usefulness, or an
/// updated event without an answer.
void validate_feedback(const FeedbackRecord& record);

/// Parses a POST /feedback body (a record without timestamp) and validates it.
FeedbackRecord parse_feedback_request(std::string_view body);

/// One JSON object, no trailing newline. Absent optionals are omitted.
std::string encode_feedback_record(const FeedbackRecord& record);
FeedbackRecord decode_feedback_record(std::string_view line);

/// Append-only JSONL writer; appends from concurrent callers are serialized
/// and each is flushed as a whole line.
class FeedbackLog {
 public:
  explicit FeedbackLog(std::filesystem::path path);
  void append(const FeedbackRecord& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

struct FeedbackSummary {
  std::size_t queries = 0;       // well-formed records
  std::size_t not_relevant = 0;
  std::size_t relevant = 0;      // queries - not_relevant
  std::size_t useful_yes = 0;
  std::size_t useful_no = 0;
  std::size_t useful_no_answer = 0;
  std::size_t malformed_lines = 0;

  double relevance_rate() const;
  /// useful_yes / (useful_yes + useful_no); 0 when nobody answered.
  double usefulness_rate() const;

  bool operator==(const FeedbackSummary&) const = default;
};

FeedbackSummary summarize_feedback(std::string_view jsonl);
/// A missing log is an empty log.
FeedbackSummary feedback_summary(const std::filesystem::path& log_path);
std::string feedback_summary_to_json(const FeedbackSummary& summary);

}  // namespace qqse

#endif  // QQSE_FEEDBACK_H_
