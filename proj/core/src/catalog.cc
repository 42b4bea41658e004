#include "qqse/catalog.h"

#include <algorithm>
#include <cstdlib>

#include "json.hpp"
#include "qqse/util.h"

namespace qqse {

using nlohmann::json;

Catalog::Catalog(std::vector<ClarificationQuestion> questions, std::string version)
    : questions_(std::move(questions)), version_(std::move(version)) {
  std::sort(questions_.begin(), questions_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::array<bool, kNumQuestions + 1> seen{};
  for (const auto& q : questions_) {
    if (q.id < 1 || q.id > kNumQuestions) {
      throw Error("catalog: question id " + std::to_string(q.id) + " outside 1..16");
    }
    if (seen[static_cast<std::size_t>(q.id)]) {
      throw Error("catalog: duplicate question id " + std::to_string(q.id));
    }
    seen[static_cast<std::size_t>(q.id)] = true;
    if (q.text.empty()) throw Error("catalog: question " + std::to_string(q.id) + " has no text");
  }
  for (int id = 1; id <= kNumQuestions; ++id) {
    if (!seen[static_cast<std::size_t>(id)]) {
      throw Error("catalog: missing question id " + std::to_string(id));
    }
  }
}

const ClarificationQuestion& Catalog::at(int id) const {
  if (id < 1 || id > static_cast<int>(questions_.size())) {
    throw Error("catalog: no question with id " + std::to_string(id));
  }
  return questions_[static_cast<std::size_t>(id - 1)];
}

Catalog parse_catalog(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("catalog: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("catalog: expected a JSON array");

  std::vector<ClarificationQuestion> questions;
  for (const auto& entry : doc) {
    try {
      ClarificationQuestion q;
      q.id = entry.at("id").get<int>();
      q.text = entry.at("text").get<std::string>();
      q.common_answers = entry.at("answers").get<std::vector<std::string>>();
      questions.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw ParseError(std::string("catalog entry: ") + e.what());
    }
  }
  return Catalog(std::move(questions), "cq16-" + fnv1a64_hex(json_text));
}

Catalog load_catalog(const std::filesystem::path& path) {
  return parse_catalog(read_file(path));
}

std::filesystem::path default_catalog_path() {
  if (const char* dir = std::getenv("QQSE_DATA_DIR"); dir && *dir) {
    return std::filesystem::path(dir) / "catalog.json";
  }
#ifdef QQSE_SOURCE_DATA_DIR
  if (std::filesystem::path src = std::filesystem::path(QQSE_SOURCE_DATA_DIR) / "catalog.json";
      std::filesystem::exists(src)) {
    return src;
  }
#endif
  return std::filesystem::path(QQSE_DEFAULT_DATA_DIR) / "catalog.json";
}

Tokens question_tokens(const ClarificationQuestion& question) { return tokenize(question.text); }

Tokens answer_tokens(const ClarificationQuestion& question) {
  Tokens out;
  for (const auto& answer : question.common_answers) {
    for (auto& t : tokenize(answer)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace qqse
