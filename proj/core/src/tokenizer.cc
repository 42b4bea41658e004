#include "qqse/tokenizer.h"

namespace qqse {
namespace {

bool is_term_char(unsigned char c) {
  if (c >= 0x80) return true;
  if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) return true;
  return c == '.' || c == '#' || c == '+' || c == '-';
}

void flush(std::string& current, Tokens& out) {
  std::size_t begin = 0;
  std::size_t end = current.size();
  while (begin < end && current[begin] == '-') ++begin;
  while (end > begin && (current[end - 1] == '.' || current[end - 1] == '-')) --end;
  // A lone run of dots carries no meaning.
  if (end > begin && current.find_first_not_of('.', begin) < end) {
    out.emplace_back(current.substr(begin, end - begin));
  }
  current.clear();
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    if (is_term_char(c)) {
      current.push_back(static_cast<char>(c));
    } else if (!current.empty()) {
      flush(current, out);
    }
  }
  if (!current.empty()) flush(current, out);
  return out;
}

std::string join_tokens(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace qqse
