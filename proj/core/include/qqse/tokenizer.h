#ifndef QQSE_TOKENIZER_H_
#define QQSE_TOKENIZER_H_

#include <string>
#include <string_view>
#include <vector>

namespace qqse {

using Tokens = std::vector<std::string>;

/// Lowercases `text` and splits it into query terms.
///
/// ASCII letters and digits, bytes of multi-byte UTF-8 sequences, and the
/// symbol characters '.', '#', '+', '-' are term characters; every other
/// character separates terms. Trailing '.' and leading/trailing '-' are
/// trimmed from each term so "c#", "c++", ".net", "java.lang" and "32-bit"
/// survive while sentence punctuation does not.
Tokens tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string join_tokens(const Tokens& tokens, std::string_view sep = " ");

}  // namespace qqse

#endif  // QQSE_TOKENIZER_H_
