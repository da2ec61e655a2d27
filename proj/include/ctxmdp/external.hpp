// Newline-delimited JSON bridge to an out-of-process summarizer.
//
// Request:  {"history":[[s,a,r],...], "signal":[tok,...], "token_cap":T, "mode":"refresh|compress"}
// Response: {"tokens":[tok,...]}
// One UTF-8 JSON object per line, over a child process's stdin/stdout
// ("exec:<shell command>") or a TCP stream ("tcp:<host>:<port>").
#pragma once

#include <string>

#include "ctxmdp/summarize.hpp"

namespace ctxmdp {

struct ExternalRequest {
  const HistoryBuffer* history = nullptr;
  TokenSeq signal;
  std::int64_t token_cap = 1;
  bool compress = false;
};

struct ExternalResult {
  ContextSummary summary;
  bool over_budget = false;
};

std::string encode_request(const ExternalRequest& request);

// Parses one response line and enforces the cap. Throws SummarizerError(Malformed).
ExternalResult decode_response(const std::string& line, std::int64_t token_cap);

class ExternalBridge {
 public:
  ExternalBridge(std::string endpoint, int timeout_ms);
  ~ExternalBridge();
  ExternalBridge(const ExternalBridge&) = delete;
  ExternalBridge& operator=(const ExternalBridge&) = delete;

  // Sends one request line, waits for one response line.
  ExternalResult call(const ExternalRequest& request);

  const std::string& endpoint() const { return endpoint_; }

 private:
  void connect();
  void disconnect();
  void write_all(const std::string& data);
  std::string read_line();

  std::string endpoint_;
  int timeout_ms_;
  int write_fd_ = -1;
  int read_fd_ = -1;
  int child_pid_ = -1;
  std::string pending_;
};

// One-shot convenience: opens the endpoint, sends a request, closes.
ExternalResult external_summarize(const std::string& endpoint, const ExternalRequest& request,
                                  int timeout_ms = 2000);

// Endpoint override from CTXMDP_EXTERNAL_SUMMARIZER, if set and non-empty.
std::string resolve_external_endpoint(const std::string& configured);

}  // namespace ctxmdp
