// Budgeted summarizers mapping (history, exogenous signal) to a ContextSummary.
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctxmdp/core.hpp"

namespace ctxmdp {

struct Truncate {};
struct TopFrequency {};
struct RelevanceExtract {
  // Tokens without a positive score are never retained in a summary.
  std::map<std::uint32_t, double> scores;
};
struct External {
  std::string endpoint;  // "exec:<command>" or "tcp:<host>:<port>"
  int timeout_ms = 2000;
};

using SummarizerSpec = std::variant<Truncate, TopFrequency, RelevanceExtract, External>;

std::string summarizer_name(const SummarizerSpec& spec);

// Token cap applicable to a meta action: T for Refresh, ceil(T/2) for Compress.
std::int64_t applicable_cap(const BudgetSpec& budget, MetaAction meta);

class SummarizerError : public std::runtime_error {
 public:
  enum class Kind { Transport, Timeout, Malformed };
  SummarizerError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(SummarizerError::Kind kind);

class ExternalBridge;

// Stateful summarizer: owns the external bridge connection when one is configured.
class Summarizer {
 public:
  explicit Summarizer(SummarizerSpec spec);
  ~Summarizer();
  Summarizer(Summarizer&&) noexcept;
  Summarizer& operator=(Summarizer&&) noexcept;

  struct Result {
    ContextSummary summary;
    bool over_budget = false;          // external response exceeded the cap
    std::optional<std::string> error;  // external failure; Truncate fallback was used
  };

  // Keep returns `previous` with age + 1. Refresh and Compress recompute under
  // the applicable cap. External failures fall back to Truncate.
  Result run(const HistoryBuffer& history, const ExogenousSignal& signal, const BudgetSpec& budget,
             MetaAction meta, const ContextSummary& previous);

  const SummarizerSpec& spec() const { return spec_; }

 private:
  SummarizerSpec spec_;
  std::unique_ptr<ExternalBridge> bridge_;
};

// Pure form for the built-in summarizers. External specs throw
// std::invalid_argument here; use Summarizer for them.
ContextSummary summarize(const SummarizerSpec& spec, const HistoryBuffer& history,
                         const ExogenousSignal& signal, const BudgetSpec& budget, MetaAction meta,
                         const ContextSummary& previous = {});

// Bounded FIFO of recent summaries backing the entropy estimate.
class SummaryWindow {
 public:
  explicit SummaryWindow(std::size_t capacity = 256);

  void push(const ContextSummary& summary);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const std::deque<TokenSeq>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<TokenSeq> items_;
  std::map<TokenSeq, std::size_t> counts_;
  friend double summary_entropy(const SummaryWindow& window);
};

// Plug-in entropy (nats) over distinct whole summaries in the window.
double summary_entropy(const SummaryWindow& window);

struct SalientToken {
  Token token;
  double score = 0.0;
  bool operator==(const SalientToken&) const = default;
};

// Top-k tokens by the spec's scoring rule (frequency, or relevance score for
// RelevanceExtract), ties broken by first occurrence.
std::vector<SalientToken> salient_tokens(const SummarizerSpec& spec, const ExogenousSignal& signal,
                                         std::size_t k);

}  // namespace ctxmdp
