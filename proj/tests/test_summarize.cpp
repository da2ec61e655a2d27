#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <map>

#include "ctxmdp/external.hpp"
#include "ctxmdp/summarize.hpp"

using namespace ctxmdp;

namespace {

ExogenousSignal signal_of(std::initializer_list<std::uint32_t> s) { return ExogenousSignal{make_tokens(s)}; }

BudgetSpec cap(std::int64_t t) {
  BudgetSpec b;
  b.token_cap = t;
  return b;
}

std::string stub(const char* mode) { return std::string("exec:") + STUB_SUMMARIZER + " " + mode; }

// Independent entropy: counts distinct sequences with a linear scan.
double brute_entropy(const std::vector<TokenSeq>& items) {
  std::vector<std::pair<TokenSeq, int>> counts;
  for (const auto& s : items) {
    bool found = false;
    for (auto& [k, c] : counts) {
      if (k == s) {
        ++c;
        found = true;
      }
    }
    if (!found) counts.emplace_back(s, 1);
  }
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / items.size();
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

TEST_CASE("truncate keeps the leading tokens") {
  const auto s = summarize(Truncate{}, HistoryBuffer{}, signal_of({5, 6, 7, 8}), cap(2), MetaAction::Refresh);
  CHECK(s.tokens == make_tokens({5, 6}));
  CHECK(s.age_steps == 0);
}

TEST_CASE("top frequency ranks by count then first occurrence") {
  const auto s = summarize(TopFrequency{}, HistoryBuffer{}, signal_of({3, 1, 1, 2, 3, 1, 2}), cap(2), MetaAction::Refresh);
  CHECK(s.tokens == make_tokens({1, 3}));
  const auto ties = summarize(TopFrequency{}, HistoryBuffer{}, signal_of({9, 8, 7}), cap(2), MetaAction::Refresh);
  CHECK(ties.tokens == make_tokens({9, 8}));
}

TEST_CASE("relevance keeps only positively scored tokens") {
  RelevanceExtract rel;
  rel.scores = {{0, 1.0}, {4, 0.5}};
  const auto s = summarize(rel, HistoryBuffer{}, signal_of({7, 4, 9, 0, 7}), cap(4), MetaAction::Refresh);
  CHECK(s.tokens == make_tokens({0, 4}));
  const auto one = summarize(rel, HistoryBuffer{}, signal_of({7, 4, 9, 0}), cap(1), MetaAction::Refresh);
  CHECK(one.tokens == make_tokens({0}));
}

TEST_CASE("keep returns the previous summary one step older") {
  const ContextSummary prev{make_tokens({1, 2}), 0.3, 4};
  const auto s = summarize(Truncate{}, HistoryBuffer{}, signal_of({9, 9, 9}), cap(3), MetaAction::Keep, prev);
  CHECK(s.tokens == prev.tokens);
  CHECK(s.age_steps == 5);
}

TEST_CASE("compress uses half the cap rounded up") {
  for (std::int64_t t = 1; t <= 9; ++t) {
    CHECK(applicable_cap(cap(t), MetaAction::Compress) == (t + 1) / 2);
    const auto s = summarize(Truncate{}, HistoryBuffer{}, signal_of({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), cap(t),
                             MetaAction::Compress);
    CHECK(static_cast<std::int64_t>(s.token_count()) == (t + 1) / 2);
  }
}

TEST_CASE("every built-in summarizer respects the applicable cap") {
  Rng rng(17);
  std::uniform_int_distribution<std::uint32_t> sym(0, 12);
  std::uniform_int_distribution<int> len(0, 30);
  std::uniform_int_distribution<std::int64_t> caps(1, 10);
  RelevanceExtract rel;
  for (std::uint32_t k = 0; k < 13; k += 2) rel.scores[k] = 1.0 + k;
  const std::vector<SummarizerSpec> specs{Truncate{}, TopFrequency{}, rel};
  for (int trial = 0; trial < 300; ++trial) {
    ExogenousSignal sig;
    for (int i = len(rng); i > 0; --i) sig.tokens.push_back(Token{sym(rng)});
    const auto budget = cap(caps(rng));
    for (const auto& spec : specs) {
      for (auto meta : {MetaAction::Refresh, MetaAction::Compress}) {
        const auto s = summarize(spec, HistoryBuffer{}, sig, budget, meta);
        CHECK(static_cast<std::int64_t>(s.token_count()) <= applicable_cap(budget, meta));
      }
    }
  }
}

TEST_CASE("summary entropy matches a brute-force count") {
  Rng rng(3);
  std::uniform_int_distribution<std::uint32_t> sym(0, 3);
  SummaryWindow window(16);
  std::vector<TokenSeq> all;
  for (int i = 0; i < 60; ++i) {
    TokenSeq t{Token{sym(rng)}, Token{sym(rng)}};
    window.push(ContextSummary{t, 0.0, 0});
    all.push_back(t);
    const std::vector<TokenSeq> recent(all.end() - static_cast<std::ptrdiff_t>(std::min<std::size_t>(16, all.size())),
                                       all.end());
    CHECK(std::abs(summary_entropy(window) - brute_entropy(recent)) <= 1e-12);
    CHECK(summary_entropy(window) <= std::log(static_cast<double>(window.size())) + 1e-12);
  }
  CHECK_THROWS_AS(summary_entropy(SummaryWindow(4)), std::invalid_argument);
}

TEST_CASE("salient tokens follow the scoring rule") {
  const auto top = salient_tokens(TopFrequency{}, signal_of({2, 2, 5, 2, 5, 7}), 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == SalientToken{Token{2}, 3.0});
  CHECK(top[1] == SalientToken{Token{5}, 2.0});
  RelevanceExtract rel;
  rel.scores = {{7, 4.0}};
  CHECK(salient_tokens(rel, signal_of({2, 2, 7}), 1)[0].token == Token{7});
}

TEST_CASE("request and response lines follow the bridge schema") {
  HistoryBuffer h;
  h.push(HistoryEntry{StateId{1}, ActionId{2}, 0.5});
  const auto line = encode_request(ExternalRequest{&h, make_tokens({4, 5}), 3, true});
  CHECK(line == "{\"history\":[[1,2,0.5]],\"mode\":\"compress\",\"signal\":[4,5],\"token_cap\":3}\n");
  CHECK(decode_response("{\"tokens\":[1,2]}", 4).summary.tokens == make_tokens({1, 2}));
  const auto over = decode_response("{\"tokens\":[1,2,3,4,5]}", 2);
  CHECK(over.over_budget);
  CHECK(over.summary.tokens == make_tokens({1, 2}));
  CHECK_THROWS_AS(decode_response("{\"tokens\":[-1]}", 2), SummarizerError);
  CHECK_THROWS_AS(decode_response("[1,2]", 2), SummarizerError);
}

TEST_CASE("echo stub reproduces truncate") {
  Summarizer ext(External{stub("echo"), 2000});
  const auto sig = signal_of({8, 1, 6, 3, 3});
  for (int i = 0; i < 3; ++i) {
    const auto r = ext.run(HistoryBuffer{}, sig, cap(3), MetaAction::Refresh, {});
    CHECK_FALSE(r.error.has_value());
    CHECK(r.summary == summarize(Truncate{}, HistoryBuffer{}, sig, cap(3), MetaAction::Refresh));
  }
}

TEST_CASE("over-long external responses are cut to the cap and flagged") {
  Summarizer ext(External{stub("overflow"), 2000});
  const auto r = ext.run(HistoryBuffer{}, signal_of({1, 2, 3, 4, 5, 6, 7, 8}), cap(4), MetaAction::Refresh, {});
  CHECK(r.over_budget);
  CHECK(r.summary.token_count() == 4);
}

TEST_CASE("external failures fall back to truncate") {
  const auto sig = signal_of({4, 3, 2, 1});
  const auto expected = summarize(Truncate{}, HistoryBuffer{}, sig, cap(2), MetaAction::Refresh);
  struct Case {
    std::string endpoint;
    const char* kind;
  };
  for (const auto& c : {Case{"tcp:127.0.0.1:1", "transport"}, Case{stub("malformed"), "malformed"},
                        Case{stub("crash"), "transport"}, Case{stub("silent"), "timeout"},
                        Case{"ftp:nowhere", "transport"}}) {
    Summarizer ext(External{c.endpoint, 300});
    const auto r = ext.run(HistoryBuffer{}, sig, cap(2), MetaAction::Refresh, {});
    REQUIRE(r.error.has_value());
    CHECK(r.error->rfind(c.kind, 0) == 0);
    CHECK(r.summary == expected);
  }
}

TEST_CASE("environment variable overrides the endpoint") {
  setenv("CTXMDP_EXTERNAL_SUMMARIZER", "exec:other", 1);
  CHECK(resolve_external_endpoint("exec:configured") == "exec:other");
  unsetenv("CTXMDP_EXTERNAL_SUMMARIZER");
  CHECK(resolve_external_endpoint("exec:configured") == "exec:configured");
}
