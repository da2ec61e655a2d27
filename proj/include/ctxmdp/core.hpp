// Domain types shared by every ctxmdp module.
//
// All types here are plain values. A context summary is a bounded bag of
// tokens drawn from a per-environment vocabulary; the policy only ever sees a
// base state paired with such a summary.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ctxmdp {

using Rng = std::mt19937_64;

/// Derive an independent stream seed from a base seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct StateId {
  std::size_t index = 0;
  auto operator<=>(const StateId&) const = default;
};

struct ActionId {
  std::size_t index = 0;
  auto operator<=>(const ActionId&) const = default;
};

struct Token {
  std::uint32_t symbol = 0;
  auto operator<=>(const Token&) const = default;
};

using TokenSeq = std::vector<Token>;

TokenSeq make_tokens(std::initializer_list<std::uint32_t> symbols);

struct ContextSummary {
  TokenSeq tokens;
  double entropy_nats = 0.0;
  std::int64_t age_steps = 0;

  std::size_t token_count() const { return tokens.size(); }
  bool operator==(const ContextSummary&) const = default;
};

struct AugmentedState {
  StateId state;
  ContextSummary summary;
  bool operator==(const AugmentedState&) const = default;
};

AugmentedState augment(StateId state, ContextSummary summary);

struct HistoryEntry {
  StateId state;
  ActionId action;
  double reward = 0.0;
  bool operator==(const HistoryEntry&) const = default;
};

// Bounded FIFO of past transitions; the oldest entry is evicted at capacity.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity = 64);

  void push(HistoryEntry entry);
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<HistoryEntry>& entries() const { return entries_; }
  // Total number of entries ever pushed (not reduced by eviction).
  std::uint64_t total_pushed() const { return total_pushed_; }

 private:
  std::size_t capacity_;
  std::deque<HistoryEntry> entries_;
  std::uint64_t total_pushed_ = 0;
};

struct ExogenousSignal {
  TokenSeq tokens;
  bool operator==(const ExogenousSignal&) const = default;
};

struct PerStep {
  bool operator==(const PerStep&) const = default;
};
struct SlidingWindow {
  std::int64_t window = 16;
  bool operator==(const SlidingWindow&) const = default;
};
struct Periodic {
  std::int64_t period = 8;
  bool operator==(const Periodic&) const = default;
};
using UpdateMode = std::variant<PerStep, SlidingWindow, Periodic>;

std::string to_string(const UpdateMode& mode);
// Accepts "per_step", "sliding_window:W", "periodic:K".
UpdateMode parse_update_mode(std::string_view text);

struct BudgetSpec {
  std::int64_t token_cap = 64;
  double latency_cap_ms = 120.0;
  double lambda = 0.01;
  double mu = 1.0;
  double nu = 1.0;
  UpdateMode update_mode = PerStep{};

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

enum class MetaAction { Keep, Refresh, Compress };

std::string_view to_string(MetaAction action);

struct BudgetSignals {
  double entropy_nats = 0.0;
  std::int64_t token_count = 0;
  double recent_latency_ms = 0.0;
  std::int64_t summary_age = 0;
};

struct SummaryEmbedding {
  std::vector<double> values;
  bool operator==(const SummaryEmbedding&) const = default;
};

// Bag-of-tokens count vector indexed by token symbol. Symbols >= dim are
// dropped (truncation); missing symbols stay zero (padding).
SummaryEmbedding embed_summary(const ContextSummary& summary, std::size_t dim);

// Canonical bag-of-tokens identity of a summary: sorted symbols.
std::vector<std::uint32_t> bag_key(const TokenSeq& tokens);

}  // namespace ctxmdp
