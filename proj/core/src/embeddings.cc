#include "qqse/embeddings.h"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "qqse/util.h"

namespace qqse {

std::span<const float> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return {};
  return {values_.data() + it->second * dim_, dim_};
}

EmbeddingTable EmbeddingTable::from_entries(
    const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
  std::string text;
  char buf[32];
  for (const auto& [token, vec] : entries) {
    text += token;
    for (float v : vec) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      text += ' ';
      text.append(buf, end);
    }
    text += '\n';
  }
  return parse_embeddings(text);
}

EmbeddingTable parse_embeddings(std::string_view text,
                                std::optional<std::size_t> expected_dimension) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<float> row;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::size_t space = line.find(' ');
    if (space == 0 || space == std::string_view::npos) {
      throw ParseError("embeddings: expected a token followed by values", line_no);
    }
    std::string token(line.substr(0, space));

    row.clear();
    const char* p = line.data() + space;
    const char* last = line.data() + line.size();
    while (p < last) {
      while (p < last && *p == ' ') ++p;
      if (p == last) break;
      float v = 0.0f;
      auto [next, ec] = std::from_chars(p, last, v);
      if (ec != std::errc() || (next < last && *next != ' ')) {
        throw ParseError("embeddings: malformed number for token \"" + token + "\"", line_no);
      }
      row.push_back(v);
      p = next;
    }

    if (table.dim_ == 0) {
      table.dim_ = expected_dimension.value_or(row.size());
      if (table.dim_ == 0) throw ParseError("embeddings: vector has no components", line_no);
    }
    if (row.size() != table.dim_) {
      throw ParseError("embeddings: dimension mismatch for token \"" + token + "\": expected " +
                           std::to_string(table.dim_) + ", found " + std::to_string(row.size()),
                       line_no);
    }
    if (table.index_.contains(token)) {
      throw ParseError("embeddings: duplicate token \"" + token + "\"", line_no);
    }
    table.index_.emplace(token, table.tokens_.size());
    table.tokens_.push_back(std::move(token));
    table.values_.insert(table.values_.end(), row.begin(), row.end());
  }
  if (table.tokens_.empty()) throw ParseError("embeddings: file is empty");
  table.fingerprint_ = fnv1a64_hex(text);
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dimension) {
  return parse_embeddings(read_file(path), expected_dimension);
}

std::string serialize_embeddings(const EmbeddingTable& table) {
  std::string text;
  char buf[32];
  for (const auto& token : table.tokens()) {
    text += token;
    for (float v : table.find(token)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      text += ' ';
      text.append(buf, end);
    }
    text += '\n';
  }
  return text;
}

SequenceMatrix embed_sequence(const EmbeddingTable& table, const Tokens& tokens,
                              std::size_t max_len) {
  if (max_len == 0) throw Error("embed_sequence: max_len must be at least 1");
  SequenceMatrix m;
  m.max_len = max_len;
  m.dim = table.dimension();
  m.true_length = std::min(tokens.size(), max_len);
  m.values.assign(max_len * m.dim, 0.0f);
  for (std::size_t i = 0; i < m.true_length; ++i) {
    auto v = table.find(tokens[i]);
    std::copy(v.begin(), v.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * m.dim));
  }
  return m;
}

std::vector<double> average_embedding(const EmbeddingTable& table, const Tokens& tokens) {
  std::vector<double> avg(table.dimension(), 0.0);
  if (tokens.empty()) return avg;
  for (const auto& t : tokens) {
    auto v = table.find(t);
    for (std::size_t d = 0; d < v.size(); ++d) avg[d] += v[d];
  }
  for (double& x : avg) x /= static_cast<double>(tokens.size());
  return avg;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("cosine_similarity: length mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace qqse
