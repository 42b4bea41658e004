#ifndef QQSE_SUGGESTER_H_
#define QQSE_SUGGESTER_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qqse/tokenizer.h"
#include "qqse/util.h"

namespace qqse {

/// Internal mask marker; collision-free with tokenizer output.
inline constexpr std::string_view kMaskToken = "\xE2\x96\x81MASK\xE2\x96\x81";
/// Mask rendering used in files and on the wire.
inline constexpr std::string_view kMaskText = "{mask}";

inline constexpr std::size_t kDefaultTopK = 100;

struct SuggesterRequest {
  Tokens tokens;  // contains kMaskToken at mask_positions
  std::vector<std::size_t> mask_positions;
  std::size_t top_k = kDefaultTopK;
};

struct SuggesterResponse {
  /// One ranked list per mask position, best first.
  std::vector<std::vector<std::string>> suggestions;
};

class SuggesterError : public Error {
 public:
  SuggesterError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

/// A masked-term completion backend.
class Suggester {
 public:
  virtual ~Suggester() = default;
  virtual SuggesterResponse suggest(const SuggesterRequest& request) = 0;
};

/// {"tokens": [...], "mask_positions": [...], "top_k": k} with masks
/// rendered as "{mask}".
std::string encode_suggester_request(const SuggesterRequest& request);
SuggesterRequest decode_suggester_request(std::string_view json_line);

/// {"suggestions": [[...], ...]}
std::string encode_suggester_response(const SuggesterResponse& response);

/// Parses a response and enforces its invariants: one list per mask
/// position, at most top_k entries each, whitespace trimmed, and empty or
/// mask-bearing entries dropped. Throws SuggesterError on malformed input.
SuggesterResponse decode_suggester_response(std::string_view json_line,
                                            const SuggesterRequest& request);

/// In-process backend driven by a callback; used for tests and dry runs.
class CallbackSuggester : public Suggester {
 public:
  using Fn = std::function<SuggesterResponse(const SuggesterRequest&)>;
  explicit CallbackSuggester(Fn fn) : fn_(std::move(fn)) {}
  SuggesterResponse suggest(const SuggesterRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

/// Spawns `/bin/sh -c command` once and exchanges one JSON line per request
/// over its stdin/stdout.
class ProcessSuggester : public Suggester {
 public:
  explicit ProcessSuggester(std::string command);
  ~ProcessSuggester() override;
  ProcessSuggester(const ProcessSuggester&) = delete;
  ProcessSuggester& operator=(const ProcessSuggester&) = delete;

  SuggesterResponse suggest(const SuggesterRequest& request) override;

 private:
  void start();
  void stop();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// POSTs each request as JSON to `url` (http://host[:port]/path).
class HttpSuggester : public Suggester {
 public:
  explicit HttpSuggester(const std::string& url, int timeout_seconds = 60);
  SuggesterResponse suggest(const SuggesterRequest& request) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
  int timeout_seconds_;
};

}  // namespace qqse

#endif  // QQSE_SUGGESTER_H_
