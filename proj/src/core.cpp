#include "ctxmdp/core.hpp"

#include <algorithm>
#include <charconv>

namespace ctxmdp {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TokenSeq make_tokens(std::initializer_list<std::uint32_t> symbols) {
  TokenSeq out;
  out.reserve(symbols.size());
  for (auto s : symbols) out.push_back(Token{s});
  return out;
}

AugmentedState augment(StateId state, ContextSummary summary) {
  return AugmentedState{state, std::move(summary)};
}

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("history capacity must be >= 1");
}

void HistoryBuffer::push(HistoryEntry entry) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(entry);
  ++total_pushed_;
}

std::string to_string(const UpdateMode& mode) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PerStep>) {
          return "per_step";
        } else if constexpr (std::is_same_v<T, SlidingWindow>) {
          return "sliding_window:" + std::to_string(m.window);
        } else {
          return "periodic:" + std::to_string(m.period);
        }
      },
      mode);
}

namespace {

std::int64_t parse_positive(std::string_view text, std::string_view what) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer, got '" +
                                std::string(text) + "'");
  }
  return value;
}

}  // namespace

UpdateMode parse_update_mode(std::string_view text) {
  if (text == "per_step") return PerStep{};
  auto colon = text.find(':');
  auto head = text.substr(0, colon);
  if (colon != std::string_view::npos) {
    auto arg = text.substr(colon + 1);
    if (head == "sliding_window") return SlidingWindow{parse_positive(arg, "window")};
    if (head == "periodic") return Periodic{parse_positive(arg, "period")};
  } else {
    if (head == "sliding_window") return SlidingWindow{16};
    if (head == "periodic") return Periodic{8};
  }
  throw std::invalid_argument("unknown update mode '" + std::string(text) +
                              "' (expected per_step, sliding_window:W or periodic:K)");
}

void BudgetSpec::validate() const {
  if (token_cap < 1) throw std::invalid_argument("budget.token_cap must be >= 1");
  if (!(latency_cap_ms > 0.0)) throw std::invalid_argument("budget.latency_cap_ms must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("budget.lambda must be >= 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("budget.mu must be >= 0");
  if (!(nu >= 0.0)) throw std::invalid_argument("budget.nu must be >= 0");
  if (auto* w = std::get_if<SlidingWindow>(&update_mode); w && w->window < 1) {
    throw std::invalid_argument("budget.update_mode window must be >= 1");
  }
  if (auto* p = std::get_if<Periodic>(&update_mode); p && p->period < 1) {
    throw std::invalid_argument("budget.update_mode period must be >= 1");
  }
}

std::string_view to_string(MetaAction action) {
  switch (action) {
    case MetaAction::Keep: return "keep";
    case MetaAction::Refresh: return "refresh";
    case MetaAction::Compress: return "compress";
  }
  return "keep";
}

SummaryEmbedding embed_summary(const ContextSummary& summary, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be >= 1");
  SummaryEmbedding out{std::vector<double>(dim, 0.0)};
  for (const auto& t : summary.tokens) {
    if (t.symbol < dim) out.values[t.symbol] += 1.0;
  }
  return out;
}

std::vector<std::uint32_t> bag_key(const TokenSeq& tokens) {
  std::vector<std::uint32_t> key;
  key.reserve(tokens.size());
  for (const auto& t : tokens) key.push_back(t.symbol);
  std::sort(key.begin(), key.end());
  return key;
}

}  // namespace ctxmdp
