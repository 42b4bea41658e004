#include "qqse/feedback.h"

#include "json.hpp"
#include "qqse/catalog.h"
#include "qqse/util.h"

namespace qqse {

using nlohmann::json;

void validate_feedback(const FeedbackRecord& r) {
  if (r.query.empty()) throw Error("feedback: query is empty");
  if (r.cq_id < 1 || r.cq_id > kNumQuestions) throw Error("feedback: cq_id outside 1..16");
  if (r.event == FeedbackEvent::kNotRelevant) {
    if (r.answer) throw Error("feedback: a not_relevant event cannot carry an answer");
    if (r.useful) throw Error("feedback: a not_relevant event cannot carry usefulness");
  } else if (!r.answer || r.answer->find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error("feedback: an updated event requires an answer");
  }
}

namespace {

FeedbackRecord record_from_json(const json& obj, bool with_timestamp) {
  if (!obj.is_object()) throw Error("feedback: expected a JSON object");
  FeedbackRecord r;
  if (with_timestamp) r.timestamp = obj.at("timestamp").get<std::string>();
  r.query = obj.at("query").get<std::string>();
  r.cq_id = obj.at("cq_id").get<int>();
  const auto event = obj.at("event").get<std::string>();
  if (event == "not_relevant") {
    r.event = FeedbackEvent::kNotRelevant;
  } else if (event == "updated") {
    r.event = FeedbackEvent::kUpdated;
  } else {
    throw Error("feedback: unknown event \"" + event + "\"");
  }
  if (auto it = obj.find("answer"); it != obj.end() && !it->is_null()) {
    r.answer = it->get<std::string>();
  }
  if (auto it = obj.find("useful"); it != obj.end() && !it->is_null()) {
    r.useful = it->get<bool>();
  }
  validate_feedback(r);
  return r;
}

}  // namespace

FeedbackRecord parse_feedback_request(std::string_view body) {
  try {
    return record_from_json(json::parse(body), false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("feedback: ") + e.what());
  }
}

std::string encode_feedback_record(const FeedbackRecord& r) {
  json obj = {{"timestamp", r.timestamp},
              {"query", r.query},
              {"cq_id", r.cq_id},
              {"event", r.event == FeedbackEvent::kNotRelevant ? "not_relevant" : "updated"}};
  if (r.answer) obj["answer"] = *r.answer;
  if (r.useful) obj["useful"] = *r.useful;
  return obj.dump();
}

FeedbackRecord decode_feedback_record(std::string_view line) {
  try {
    return record_from_json(json::parse(line), true);
  } catch (const json::exception& e) {
    throw ParseError(std::string("feedback: ") + e.what());
  }
}

FeedbackLog::FeedbackLog(std::filesystem::path path) : path_(std::move(path)) {
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error("feedback: cannot open log " + path_.string());
}

void FeedbackLog::append(const FeedbackRecord& record) {
  const std::string line = encode_feedback_record(record) + "\n";
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error("feedback: failed to append to " + path_.string());
}

double FeedbackSummary::relevance_rate() const {
  return queries == 0 ? 0.0 : static_cast<double>(relevant) / static_cast<double>(queries);
}

double FeedbackSummary::usefulness_rate() const {
  const std::size_t answered = useful_yes + useful_no;
  return answered == 0 ? 0.0 : static_cast<double>(useful_yes) / static_cast<double>(answered);
}

FeedbackSummary summarize_feedback(std::string_view jsonl) {
  FeedbackSummary s;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    FeedbackRecord r;
    try {
      r = decode_feedback_record(line);
    } catch (const Error&) {
      ++s.malformed_lines;
      continue;
    }
    ++s.queries;
    if (r.event == FeedbackEvent::kNotRelevant) {
      ++s.not_relevant;
    } else if (!r.useful) {
      ++s.useful_no_answer;
    } else if (*r.useful) {
      ++s.useful_yes;
    } else {
      ++s.useful_no;
    }
  }
  s.relevant = s.queries - s.not_relevant;
  return s;
}

FeedbackSummary feedback_summary(const std::filesystem::path& log_path) {
  if (!std::filesystem::exists(log_path)) return {};
  return summarize_feedback(read_file(log_path));
}

std::string feedback_summary_to_json(const FeedbackSummary& s) {
  return json{{"queries", s.queries},
              {"relevant", s.relevant},
              {"not_relevant", s.not_relevant},
              {"useful_yes", s.useful_yes},
              {"useful_no", s.useful_no},
              {"useful_no_answer", s.useful_no_answer},
              {"malformed_lines", s.malformed_lines},
              {"relevance_rate", s.relevance_rate()},
              {"usefulness_rate", s.usefulness_rate()}}
      .dump(2);
}

}  // namespace qqse
