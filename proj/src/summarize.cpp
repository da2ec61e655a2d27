#include "ctxmdp/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ctxmdp/external.hpp"

namespace ctxmdp {

namespace {

struct Ranked {
  Token token;
  double score;
  std::size_t first_seen;
};

// Distinct tokens in order of first occurrence with their counts.
std::vector<Ranked> frequency_table(const TokenSeq& tokens) {
  std::vector<Ranked> table;
  std::unordered_map<std::uint32_t, std::size_t> where;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto [it, inserted] = where.try_emplace(tokens[i].symbol, table.size());
    if (inserted) {
      table.push_back(Ranked{tokens[i], 1.0, i});
    } else {
      table[it->second].score += 1.0;
    }
  }
  return table;
}

std::vector<Ranked> relevance_table(const TokenSeq& tokens, const RelevanceExtract& spec) {
  auto table = frequency_table(tokens);
  for (auto& r : table) {
    auto it = spec.scores.find(r.token.symbol);
    r.score = it == spec.scores.end() ? 0.0 : it->second;
  }
  return table;
}

void rank(std::vector<Ranked>& table) {
  std::stable_sort(table.begin(), table.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.first_seen < b.first_seen;
  });
}

TokenSeq builtin_tokens(const SummarizerSpec& spec, const ExogenousSignal& signal,
                        std::size_t cap) {
  TokenSeq out;
  if (std::holds_alternative<Truncate>(spec) || std::holds_alternative<External>(spec)) {
    const auto n = std::min(cap, signal.tokens.size());
    out.assign(signal.tokens.begin(), signal.tokens.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
  std::vector<Ranked> table;
  if (const auto* rel = std::get_if<RelevanceExtract>(&spec)) {
    table = relevance_table(signal.tokens, *rel);
    std::erase_if(table, [](const Ranked& r) { return !(r.score > 0.0); });
  } else {
    table = frequency_table(signal.tokens);
  }
  rank(table);
  for (std::size_t i = 0; i < table.size() && out.size() < cap; ++i) out.push_back(table[i].token);
  return out;
}

ContextSummary kept(const ContextSummary& previous) {
  ContextSummary out = previous;
  out.age_steps += 1;
  return out;
}

}  // namespace

std::string summarizer_name(const SummarizerSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Truncate>) return "truncate";
        else if constexpr (std::is_same_v<T, TopFrequency>) return "top_frequency";
        else if constexpr (std::is_same_v<T, RelevanceExtract>) return "relevance";
        else return "external";
      },
      spec);
}

std::int64_t applicable_cap(const BudgetSpec& budget, MetaAction meta) {
  if (meta == MetaAction::Compress) return (budget.token_cap + 1) / 2;
  return budget.token_cap;
}

std::string_view to_string(SummarizerError::Kind kind) {
  switch (kind) {
    case SummarizerError::Kind::Transport: return "transport";
    case SummarizerError::Kind::Timeout: return "timeout";
    case SummarizerError::Kind::Malformed: return "malformed";
  }
  return "transport";
}

ContextSummary summarize(const SummarizerSpec& spec, const HistoryBuffer&,
                         const ExogenousSignal& signal, const BudgetSpec& budget, MetaAction meta,
                         const ContextSummary& previous) {
  budget.validate();
  if (meta == MetaAction::Keep) return kept(previous);
  if (std::holds_alternative<External>(spec)) {
    throw std::invalid_argument("external summarizers need a Summarizer instance");
  }
  const auto cap = static_cast<std::size_t>(applicable_cap(budget, meta));
  return ContextSummary{builtin_tokens(spec, signal, cap), 0.0, 0};
}

Summarizer::Summarizer(SummarizerSpec spec) : spec_(std::move(spec)) {}
Summarizer::~Summarizer() = default;
Summarizer::Summarizer(Summarizer&&) noexcept = default;
Summarizer& Summarizer::operator=(Summarizer&&) noexcept = default;

Summarizer::Result Summarizer::run(const HistoryBuffer& history, const ExogenousSignal& signal,
                                   const BudgetSpec& budget, MetaAction meta,
                                   const ContextSummary& previous) {
  if (meta == MetaAction::Keep) return Result{kept(previous), false, std::nullopt};
  const auto* ext = std::get_if<External>(&spec_);
  if (ext == nullptr) {
    return Result{summarize(spec_, history, signal, budget, meta, previous), false, std::nullopt};
  }
  const auto cap = applicable_cap(budget, meta);
  try {
    if (!bridge_) bridge_ = std::make_unique<ExternalBridge>(ext->endpoint, ext->timeout_ms);
    auto reply = bridge_->call(ExternalRequest{&history, signal.tokens, cap, meta == MetaAction::Compress});
    return Result{std::move(reply.summary), reply.over_budget, std::nullopt};
  } catch (const SummarizerError& e) {
    // A broken bridge is reopened on the next call.
    bridge_.reset();
    ContextSummary fallback{builtin_tokens(Truncate{}, signal, static_cast<std::size_t>(cap)), 0.0, 0};
    return Result{std::move(fallback), false,
                  std::string(to_string(e.kind())) + ": " + e.what()};
  }
}

SummaryWindow::SummaryWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("entropy window must hold >= 1 summary");
}

void SummaryWindow::push(const ContextSummary& summary) {
  if (items_.size() == capacity_) {
    auto it = counts_.find(items_.front());
    if (--it->second == 0) counts_.erase(it);
    items_.pop_front();
  }
  items_.push_back(summary.tokens);
  ++counts_[summary.tokens];
}

double summary_entropy(const SummaryWindow& window) {
  if (window.empty()) throw std::invalid_argument("summary_entropy: window is empty");
  const double n = static_cast<double>(window.size());
  double h = 0.0;
  for (const auto& [_, count] : window.counts_) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

std::vector<SalientToken> salient_tokens(const SummarizerSpec& spec, const ExogenousSignal& signal,
                                         std::size_t k) {
  if (k == 0) throw std::invalid_argument("salient_tokens: k must be >= 1");
  std::vector<Ranked> table;
  if (const auto* rel = std::get_if<RelevanceExtract>(&spec)) {
    table = relevance_table(signal.tokens, *rel);
  } else {
    table = frequency_table(signal.tokens);
  }
  rank(table);
  std::vector<SalientToken> out;
  for (std::size_t i = 0; i < table.size() && i < k; ++i) {
    out.push_back(SalientToken{table[i].token, table[i].score});
  }
  return out;
}

}  // namespace ctxmdp
