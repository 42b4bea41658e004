#include "qqse/suggester.h"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "httplib.h"
#include "json.hpp"

namespace qqse {

using nlohmann::json;

std::string encode_suggester_request(const SuggesterRequest& request) {
  json tokens = json::array();
  for (const auto& t : request.tokens) {
    tokens.push_back(t == kMaskToken ? std::string(kMaskText) : t);
  }
  return json{{"tokens", tokens},
              {"mask_positions", request.mask_positions},
              {"top_k", request.top_k}}
      .dump();
}

SuggesterRequest decode_suggester_request(std::string_view line) {
  try {
    json obj = json::parse(line);
    SuggesterRequest r;
    for (auto& t : obj.at("tokens").get<Tokens>()) {
      r.tokens.push_back(t == kMaskText ? std::string(kMaskToken) : std::move(t));
    }
    r.mask_positions = obj.at("mask_positions").get<std::vector<std::size_t>>();
    r.top_k = obj.value("top_k", kDefaultTopK);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("suggester request: ") + e.what());
  }
}

std::string encode_suggester_response(const SuggesterResponse& response) {
  return json{{"suggestions", response.suggestions}}.dump();
}

SuggesterResponse decode_suggester_response(std::string_view line,
                                            const SuggesterRequest& request) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::exception& e) {
    throw SuggesterError(std::string("malformed suggester response: ") + e.what(), false);
  }
  if (!obj.is_object() || !obj.contains("suggestions") || !obj["suggestions"].is_array()) {
    throw SuggesterError("suggester response lacks a \"suggestions\" array", false);
  }
  const auto& lists = obj["suggestions"];
  if (lists.size() != request.mask_positions.size()) {
    throw SuggesterError("suggester returned " + std::to_string(lists.size()) + " lists for " +
                             std::to_string(request.mask_positions.size()) + " masks",
                         false);
  }
  SuggesterResponse out;
  for (const auto& list : lists) {
    if (!list.is_array()) throw SuggesterError("suggestion list is not an array", false);
    auto& dst = out.suggestions.emplace_back();
    for (const auto& entry : list) {
      if (dst.size() >= request.top_k) break;
      if (!entry.is_string()) throw SuggesterError("suggestion is not a string", false);
      std::string s = entry.get<std::string>();
      const auto first = s.find_first_not_of(" \t\r\n");
      if (first == std::string::npos) continue;
      s = s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
      if (s.find(kMaskText) != std::string::npos || s.find(kMaskToken) != std::string::npos) {
        continue;
      }
      dst.push_back(std::move(s));
    }
  }
  return out;
}

ProcessSuggester::ProcessSuggester(std::string command) : command_(std::move(command)) {
  start();
}

ProcessSuggester::~ProcessSuggester() { stop(); }

void ProcessSuggester::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw SuggesterError("pipe failed", true);
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw SuggesterError("pipe failed", true);
  }
  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw SuggesterError("fork failed", true);
  }
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ProcessSuggester::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks the child to exit; give it a moment before killing.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(10'000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

SuggesterResponse ProcessSuggester::suggest(const SuggesterRequest& request) {
  if (pid_ < 0) start();
  const std::string line = encode_suggester_request(request) + "\n";
  std::size_t written = 0;
  // SIGPIPE would kill us if the child died; block it for the write.
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  while (written < line.size()) {
    ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      struct timespec zero {};
      sigtimedwait(&block, nullptr, &zero);
      pthread_sigmask(SIG_SETMASK, &old, nullptr);
      stop();
      throw SuggesterError("suggester process closed its input", true);
    }
    written += static_cast<std::size_t>(n);
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);

  std::size_t newline;
  char chunk[4096];
  while ((newline = buffer_.find('\n')) == std::string::npos) {
    ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw SuggesterError("suggester process exited without a response", true);
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  std::string response = buffer_.substr(0, newline);
  buffer_.erase(0, newline + 1);
  return decode_suggester_response(response, request);
}

HttpSuggester::HttpSuggester(const std::string& url, int timeout_seconds)
    : timeout_seconds_(timeout_seconds) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0) throw Error("suggester url must start with http://");
  std::string rest = url.substr(kScheme.size());
  const auto slash = rest.find('/');
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  std::string authority = rest.substr(0, slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    host_ = authority.substr(0, colon);
    port_ = std::stoi(authority.substr(colon + 1));
  } else {
    host_ = authority;
  }
  if (host_.empty()) throw Error("suggester url has no host");
}

SuggesterResponse HttpSuggester::suggest(const SuggesterRequest& request) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  auto res = client.Post(path_, encode_suggester_request(request), "application/json");
  if (!res) {
    throw SuggesterError("suggester HTTP request failed: " + httplib::to_string(res.error()),
                         true);
  }
  if (res->status >= 500) {
    throw SuggesterError("suggester HTTP status " + std::to_string(res->status), true);
  }
  if (res->status != 200) {
    throw SuggesterError("suggester HTTP status " + std::to_string(res->status), false);
  }
  return decode_suggester_response(res->body, request);
}

}  // namespace qqse
