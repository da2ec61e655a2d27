// The per-step execution loop: observe, summarize before acting, act,
// record, and decide how the next summary is maintained.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxmdp/agent.hpp"
#include "ctxmdp/costmodel.hpp"
#include "ctxmdp/envs.hpp"
#include "ctxmdp/metrics.hpp"
#include "ctxmdp/summarize.hpp"

namespace ctxmdp {

enum class Baseline { None, Raw, Summarized };

std::string_view to_string(Baseline baseline);
Baseline parse_baseline(std::string_view text);

struct LoopConfig {
  Baseline baseline = Baseline::Summarized;
  BudgetSpec budget;
  CostModel cost;
  MetaPolicy meta;
  std::size_t entropy_window = 256;
  std::size_t mi_window = 256;
  std::size_t history_capacity = 64;
  bool measure_wall_clock = false;
};

struct StepRecord {
  std::uint64_t t = 0;  // global step across episodes
  std::uint64_t episode = 0;
  std::uint64_t episode_step = 0;
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  double regret_step = 0.0;
  double regret_cum = 0.0;
  std::int64_t tokens = 0;
  double entropy_nats = 0.0;
  double mi_window = 0.0;
  double latency_ms_synth = 0.0;
  double latency_ms_measured = 0.0;
  MetaAction meta = MetaAction::Keep;
  bool refresh = false;
  bool over_budget = false;
  bool done = false;
  std::size_t context_mode = 0;
  TokenSeq summary;
  std::uint64_t summary_stamp = 0;
  std::uint64_t action_stamp = 0;
  std::optional<std::string> summarizer_error;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  double total_reward = 0.0;
  bool reached_goal = false;
  bool aborted = false;
  std::string error;
};

using StepHook = std::function<void(const StepRecord&)>;

// Holds everything that persists across episodes of one run: the current
// summary, the entropy and MI windows, the scheduler and the logical clock.
class ExecutionLoop {
 public:
  ExecutionLoop(Environment& env, Policy& policy, std::optional<SummarizerSpec> summarizer, LoopConfig config,
                std::uint64_t seed);

  EpisodeTrace run_episode(std::uint64_t env_seed, const StepHook& hook = {});

  std::uint64_t steps() const { return t_; }
  const ContextSummary& summary() const { return summary_; }
  const RegretTracker& regret() const { return regret_; }
  const LoopConfig& config() const { return config_; }
  // Mean squared TD error of the updates since the last call.
  double take_td_loss();
  // The context-token content of a summary: the part that can inform the mode.
  std::vector<std::uint32_t> context_projection(const TokenSeq& tokens) const;

 private:
  double policy_value(std::size_t mode, const AugmentedState& s, ActionId a) const;
  double windowed_mi() const;
  ContextSummary next_summary(const ExogenousSignal& signal, MetaAction& meta, bool& refreshed, bool& over,
                              std::optional<std::string>& error);

  Environment& env_;
  Policy& policy_;
  std::optional<Summarizer> summarizer_;
  LoopConfig config_;
  Rng rng_;
  UpdateScheduler scheduler_;
  HistoryBuffer history_;
  SummaryWindow window_;
  ContextSummary summary_;
  RegretTracker regret_;
  std::optional<Transition> pending_;
  std::deque<std::pair<std::size_t, std::size_t>> mi_samples_;
  std::map<std::vector<std::uint32_t>, std::size_t> projection_ids_;
  std::uint64_t t_ = 0;
  std::uint64_t episode_ = 0;
  std::uint64_t clock_ = 0;
  double last_latency_ = 0.0;
  double td_sq_ = 0.0;
  std::uint64_t td_n_ = 0;
};

}  // namespace ctxmdp
