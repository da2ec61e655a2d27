#include "ctxmdp/loop.hpp"

#include <algorithm>
#include <chrono>

#include "ctxmdp/infotheory.hpp"

namespace ctxmdp {

std::string_view to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::None: return "none";
    case Baseline::Raw: return "raw";
    case Baseline::Summarized: return "summarized";
  }
  return "summarized";
}

Baseline parse_baseline(std::string_view text) {
  if (text == "none") return Baseline::None;
  if (text == "raw") return Baseline::Raw;
  if (text == "summarized") return Baseline::Summarized;
  throw std::invalid_argument("unknown baseline '" + std::string(text) + "' (expected none, raw, summarized)");
}

ExecutionLoop::ExecutionLoop(Environment& env, Policy& policy, std::optional<SummarizerSpec> summarizer,
                             LoopConfig config, std::uint64_t seed)
    : env_(env),
      policy_(policy),
      config_(std::move(config)),
      rng_(derive_seed(seed, 0x6c6f6f70)),
      scheduler_(config_.budget.update_mode),
      history_(config_.history_capacity),
      window_(config_.entropy_window) {
  config_.budget.validate();
  config_.cost.validate();
  config_.meta.validate();
  if (config_.mi_window == 0) throw std::invalid_argument("mi_window must be >= 1");
  if (config_.baseline == Baseline::Summarized) {
    if (!summarizer) throw std::invalid_argument("summarized baseline needs a summarizer");
    summarizer_.emplace(std::move(*summarizer));
  }
  if (policy_.num_actions() != env_.num_actions()) {
    throw std::invalid_argument("policy and environment disagree on the action count");
  }
}

std::vector<std::uint32_t> ExecutionLoop::context_projection(const TokenSeq& tokens) const {
  std::vector<std::uint32_t> out;
  for (const Token& t : tokens) {
    if (env_.is_context_token(t)) out.push_back(t.symbol);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double ExecutionLoop::take_td_loss() {
  const double v = td_n_ == 0 ? 0.0 : td_sq_ / static_cast<double>(td_n_);
  td_sq_ = 0.0;
  td_n_ = 0;
  return v;
}

double ExecutionLoop::windowed_mi() const {
  std::map<std::size_t, std::size_t> cols;
  for (const auto& [_, c] : mi_samples_) cols.try_emplace(c, cols.size());
  JointCounts counts(env_.num_context_modes(), cols.size());
  for (const auto& [m, c] : mi_samples_) counts.add(m, cols.at(c));
  return exact_mi(counts);
}

double ExecutionLoop::policy_value(std::size_t mode, const AugmentedState& s, ActionId a) const {
  // Bandit: mean of the pulled arm. Gridworld: value of the greedy policy under the current summary.
  if (env_.kind() == "bandit") return env_.optimal_q(mode)[0][a.index];
  std::vector<std::size_t> greedy(env_.num_states(), 0);
  AugmentedState probe = s;
  for (std::size_t st = 0; st < greedy.size(); ++st) {
    probe.state = StateId{st};
    greedy[st] = env_.is_terminal(probe.state) ? 0 : policy_.greedy_action(probe).index;
  }
  return env_.policy_value(mode, s.state, greedy);
}

ContextSummary ExecutionLoop::next_summary(const ExogenousSignal& signal, MetaAction& meta, bool& refreshed,
                                           bool& over, std::optional<std::string>& error) {
  meta = MetaAction::Keep;
  refreshed = false;
  over = false;
  switch (config_.baseline) {
    case Baseline::None:
      return ContextSummary{};
    case Baseline::Raw:
      meta = MetaAction::Refresh;
      refreshed = true;
      return ContextSummary{signal.tokens, 0.0, 0};
    case Baseline::Summarized:
      break;
  }
  if (scheduler_.decide(t_)) {
    const BudgetSignals xi{summary_.entropy_nats, static_cast<std::int64_t>(summary_.token_count()), last_latency_,
                           summary_.age_steps};
    meta = meta_select(config_.meta, xi, rng_);
    // A due refresh always recomputes; the meta-policy picks the cap.
    if (meta == MetaAction::Keep) meta = MetaAction::Refresh;
  }
  auto result = summarizer_->run(history_, signal, config_.budget, meta, summary_);
  if (meta != MetaAction::Keep) {
    scheduler_.on_refresh(t_);
    refreshed = true;
  }
  over = result.over_budget;
  error = std::move(result.error);
  return std::move(result.summary);
}

EpisodeTrace ExecutionLoop::run_episode(std::uint64_t env_seed, const StepHook& hook) {
  using Clock = std::chrono::steady_clock;
  EpisodeTrace trace;
  std::vector<Transition> transitions;
  history_.clear();
  pending_.reset();
  EnvObservation obs;
  try {
    obs = env_.reset(env_seed);
  } catch (const std::exception& e) {
    trace.aborted = true;
    trace.error = e.what();
    return trace;
  }
  const std::size_t mode = env_.context_mode();
  std::uint64_t k = 0;
  while (!obs.done) {
    StepRecord rec;
    rec.t = t_;
    rec.episode = episode_;
    rec.episode_step = k;
    rec.context_mode = mode;
    rec.state = obs.state.index;
    try {
      const auto started = Clock::now();
      bool refreshed = false;
      bool over = false;
      MetaAction meta = MetaAction::Keep;
      std::optional<std::string> error;
      summary_ = next_summary(obs.raw_context, meta, refreshed, over, error);
      window_.push(summary_);
      summary_.entropy_nats = summary_entropy(window_);
      rec.summary_stamp = clock_++;

      const AugmentedState s = augment(obs.state, summary_);
      if (pending_) {
        pending_->to = s;
        const double td = policy_.observe(*pending_);
        td_sq_ += td * td;
        ++td_n_;
        pending_.reset();
      }
      const ActionId a = policy_.select_action(s, rng_);
      rec.action_stamp = clock_++;
      const auto finished = Clock::now();

      const auto tokens = static_cast<std::int64_t>(summary_.token_count());
      const bool pays_summarizer = refreshed && config_.baseline == Baseline::Summarized;
      const double latency = config_.cost.step_latency(tokens, summary_.entropy_nats, pays_summarizer);
      last_latency_ = latency;

      const std::size_t col = projection_ids_.try_emplace(context_projection(summary_.tokens), projection_ids_.size())
                                  .first->second;
      mi_samples_.emplace_back(mode, col);
      if (mi_samples_.size() > config_.mi_window) mi_samples_.pop_front();

      regret_update(regret_, env_.optimal_value(mode, obs.state), policy_value(mode, s, a));

      const EnvObservation next = env_.step(a);
      history_.push(HistoryEntry{obs.state, a, next.reward});
      Transition tr{s, a, next.reward, AugmentedState{}, next.done};
      if (next.done) {
        const double td = policy_.observe(tr);
        td_sq_ += td * td;
        ++td_n_;
      } else {
        pending_ = tr;
      }
      transitions.push_back(tr);

      rec.action = a.index;
      rec.reward = next.reward;
      rec.regret_step = regret_.per_step.back();
      rec.regret_cum = regret_.cumulative;
      rec.tokens = tokens;
      rec.entropy_nats = summary_.entropy_nats;
      rec.mi_window = windowed_mi();
      rec.latency_ms_synth = latency;
      rec.latency_ms_measured =
          config_.measure_wall_clock ? std::chrono::duration<double, std::milli>(finished - started).count() : 0.0;
      rec.meta = meta;
      rec.refresh = refreshed;
      rec.over_budget = over;
      rec.done = next.done;
      rec.summary = summary_.tokens;
      rec.summarizer_error = std::move(error);
      trace.total_reward += next.reward;
      obs = next;
    } catch (const std::exception& e) {
      trace.aborted = true;
      trace.error = e.what();
      pending_.reset();
      break;
    }
    ++t_;
    ++k;
    if (hook) hook(rec);
    trace.steps.push_back(std::move(rec));
  }
  trace.reached_goal = env_.reached_goal();
  if (!trace.aborted) policy_.end_episode(transitions);
  ++episode_;
  return trace;
}

}  // namespace ctxmdp
