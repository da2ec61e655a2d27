#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "ctxmdp/experiment.hpp"
#include "ctxmdp/external.hpp"
#include "ctxmdp/infotheory.hpp"
#include "ctxmdp/metrics.hpp"
#include "ctxmdp/numeric.hpp"

namespace ctxmdp {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::size_t summarizer_rank(const SummarizerSpec& spec) { return spec.index(); }

std::size_t update_rank(const UpdateMode& mode) { return mode.index(); }

json token_list(const TokenSeq& tokens) {
  json out = json::array();
  for (const auto& t : tokens) out.push_back(t.symbol);
  return out;
}

ordered_json step_line(const StepRecord& r, const std::string& run_id, std::uint64_t seed, Baseline baseline) {
  ordered_json j;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["t"] = r.t;
  j["episode"] = r.episode;
  j["episode_step"] = r.episode_step;
  j["baseline"] = to_string(baseline);
  j["state"] = r.state;
  j["action"] = r.action;
  j["reward"] = r.reward;
  j["regret_step"] = r.regret_step;
  j["regret_cum"] = r.regret_cum;
  j["tokens"] = r.tokens;
  j["entropy_nats"] = r.entropy_nats;
  j["mi_window"] = r.mi_window;
  j["latency_ms_synth"] = r.latency_ms_synth;
  j["latency_ms_measured"] = r.latency_ms_measured;
  j["meta_action"] = to_string(r.meta);
  j["refresh_flag"] = r.refresh;
  j["over_budget"] = r.over_budget;
  j["context_mode"] = r.context_mode;
  j["summary"] = token_list(r.summary);
  j["summary_stamp"] = r.summary_stamp;
  j["action_stamp"] = r.action_stamp;
  j["done"] = r.done;
  j["summarizer_error"] = r.summarizer_error.value_or("");
  return j;
}

struct Accumulator {
  double latency_sum = 0.0;
  double measured_sum = 0.0;
  double tokens_sum = 0.0;
  std::int64_t max_tokens = 0;
  std::uint64_t steps = 0;
  std::uint64_t violations = 0;
  std::uint64_t over_budget = 0;
  std::uint64_t summarizer_errors = 0;
  std::uint64_t stamp_violations = 0;
  std::uint64_t last_stamp = 0;
  bool any_stamp = false;
  std::vector<std::uint64_t> refresh_steps;
  std::vector<double> cumulative_regret;
  std::vector<LatencySample> latency_samples;
  std::map<std::pair<std::size_t, std::vector<std::uint32_t>>, std::uint64_t> mode_projection;
  // epoch-local
  double epoch_latency = 0.0;
  double epoch_tokens = 0.0;
  std::int64_t epoch_max_tokens = 0;
  std::uint64_t epoch_steps = 0;
  std::map<std::tuple<std::size_t, std::size_t, std::vector<std::uint32_t>>, std::uint64_t> epoch_visits;
  TokenSeq epoch_summary_tokens;
  StepRecord last;
};

double mean_of(const std::vector<double>& v, std::size_t from) {
  if (from >= v.size()) return 0.0;
  double s = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(v.size() - from);
}

// Sufficiency gap of the visited (mode, state, summary content) triples.
double epoch_sufficiency(const Environment& env, double temperature,
                         const std::map<std::tuple<std::size_t, std::size_t, std::vector<std::uint32_t>>, std::uint64_t>& visits) {
  if (visits.empty()) return 0.0;
  std::map<std::size_t, ActionDistributions> full;
  std::map<std::vector<std::uint32_t>, ActionDistributions> partial;
  ActionDistributions p_rows, q_rows;
  std::vector<double> weights;
  for (const auto& [key, count] : visits) {
    const auto& [mode, state, projection] = key;
    auto f = full.find(mode);
    if (f == full.end()) {
      f = full.emplace(mode, optimal_softmax_policy(env, mode_indicator(env, mode), temperature)).first;
    }
    auto q = partial.find(projection);
    if (q == partial.end()) {
      ContextSummary c;
      for (auto s : projection) c.tokens.push_back(Token{s});
      q = partial.emplace(projection, optimal_softmax_policy(env, mode_posterior(env, c), temperature)).first;
    }
    p_rows.push_back(f->second.at(state));
    q_rows.push_back(q->second.at(state));
    weights.push_back(static_cast<double>(count));
  }
  return sufficiency_epsilon(p_rows, q_rows, weights);
}

std::string salient_line(const TokenSeq& tokens) {
  std::string out;
  if (tokens.empty()) return out;
  for (const auto& s : salient_tokens(TopFrequency{}, ExogenousSignal{tokens}, 3)) {
    if (!out.empty()) out += ",";
    out += std::to_string(s.token.symbol);
  }
  return out;
}

}  // namespace

std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, const Environment& env) {
  const auto& a = config.agent;
  const double gamma = a.discount.value_or(env.discount());
  std::unique_ptr<Policy> p;
  if (a.policy == "linear_q") {
    auto q = std::make_unique<LinearQ>(env.num_states(), env.num_actions(), env.vocab_size(), gamma, a.step, a.exploration);
    q->set_initial_value(a.initial_value);
    p = std::move(q);
  } else if (a.policy == "tabular_q") {
    auto q = std::make_unique<TabularQ>(env.num_actions(), gamma, a.step, a.exploration);
    q->set_initial_value(a.initial_value);
    p = std::move(q);
  } else if (a.policy == "softmax") {
    p = std::make_unique<SoftmaxPolicy>(env.num_actions(), a.temperature, a.step.learning_rate, gamma);
  } else if (a.policy == "uniform") {
    p = std::make_unique<UniformRandom>(env.num_actions());
  } else {
    throw ConfigError("unknown policy '" + a.policy + "'");
  }
  p->probe_temperature = a.probe_temperature;
  return p;
}

RunResult execute_run(const ExperimentConfig& config, Baseline baseline, std::uint64_t seed, const std::string& run_id,
                      const fs::path& out_dir) {
  RunResult result;
  result.run_id = run_id;
  result.baseline = baseline;
  result.seed = seed;

  auto env = make_environment(config.env);
  auto policy = make_policy(config, *env);
  LoopConfig lc;
  lc.baseline = baseline;
  lc.budget = config.budget;
  lc.cost = config.cost;
  lc.meta = config.meta;
  lc.entropy_window = config.entropy_window;
  lc.mi_window = config.mi_window;
  lc.history_capacity = config.history_capacity;
  lc.measure_wall_clock = config.measure_wall_clock;
  std::optional<SummarizerSpec> spec;
  if (baseline == Baseline::Summarized) {
    spec = config.summarizer;
    if (auto* ext = std::get_if<External>(&*spec)) ext->endpoint = resolve_external_endpoint(ext->endpoint);
  }
  ExecutionLoop loop(*env, *policy, spec, lc, seed);

  const fs::path dir = out_dir / run_id;
  fs::create_directories(dir);
  std::ofstream steps_out(dir / "steps.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream losses_out(dir / "losses.jsonl", std::ios::binary | std::ios::trunc);
  if (!steps_out || !losses_out) throw std::runtime_error("cannot write run outputs under " + dir.string());
  {
    ordered_json h;
    h["schema"] = kStepsSchema;
    h["run_id"] = run_id;
    h["baseline"] = to_string(baseline);
    h["seed"] = seed;
    steps_out << h.dump() << '\n';
    h["schema"] = kLossesSchema;
    losses_out << h.dump() << '\n';
  }

  Accumulator acc;
  const bool summarized = baseline == Baseline::Summarized;
  auto hook = [&](const StepRecord& r) {
    steps_out << step_line(r, run_id, seed, baseline).dump() << '\n';
    acc.latency_sum += r.latency_ms_synth;
    acc.measured_sum += r.latency_ms_measured;
    acc.tokens_sum += static_cast<double>(r.tokens);
    acc.max_tokens = std::max(acc.max_tokens, r.tokens);
    ++acc.steps;
    if (summarized && r.tokens > config.budget.token_cap) ++acc.violations;
    if (r.over_budget) ++acc.over_budget;
    if (r.summarizer_error) ++acc.summarizer_errors;
    if ((acc.any_stamp && r.summary_stamp <= acc.last_stamp) || r.action_stamp <= r.summary_stamp) ++acc.stamp_violations;
    acc.last_stamp = r.action_stamp;
    acc.any_stamp = true;
    if (summarized && r.meta != MetaAction::Keep) acc.refresh_steps.push_back(r.t);
    acc.cumulative_regret.push_back(r.regret_cum);
    acc.latency_samples.push_back(LatencySample{r.entropy_nats, r.latency_ms_synth, r.tokens, LatencySource::Synthetic});
    const auto projection = loop.context_projection(r.summary);
    ++acc.mode_projection[{r.context_mode, projection}];
    acc.epoch_latency += r.latency_ms_synth;
    acc.epoch_tokens += static_cast<double>(r.tokens);
    acc.epoch_max_tokens = std::max(acc.epoch_max_tokens, r.tokens);
    ++acc.epoch_steps;
    ++acc.epoch_visits[{r.context_mode, r.state, projection}];
    acc.epoch_summary_tokens.insert(acc.epoch_summary_tokens.end(), r.summary.begin(), r.summary.end());
    acc.last = r;
  };

  const std::uint64_t episodes = config.agent.episodes;
  const std::uint64_t log_every = config.log_every > 0 ? config.log_every : std::max<std::uint64_t>(1, episodes / 20);
  std::vector<double> episode_reward;
  std::vector<double> episode_success;
  std::deque<AugmentedState> probes;
  std::set<AugmentedKey> probe_keys;
  std::uint64_t epoch = 0;
  double epoch_return = 0.0;
  std::uint64_t epoch_episodes = 0;

  for (std::uint64_t ep = 0; ep < episodes; ++ep) {
    const auto trace = loop.run_episode(derive_seed(seed, ep), hook);
    if (trace.aborted) {
      result.failed = true;
      result.error = "episode " + std::to_string(ep) + " aborted: " + trace.error;
      break;
    }
    episode_reward.push_back(trace.total_reward);
    episode_success.push_back(trace.reached_goal ? 1.0 : 0.0);
    epoch_return += trace.total_reward;
    ++epoch_episodes;
    for (const auto& r : trace.steps) {
      AugmentedState s{StateId{r.state}, ContextSummary{r.summary, r.entropy_nats, 0}};
      auto key = augmented_key(s);
      if (probe_keys.count(key)) continue;
      probes.push_back(std::move(s));
      probe_keys.insert(std::move(key));
      if (probes.size() > config.probe_states) {
        probe_keys.erase(augmented_key(probes.front()));
        probes.pop_front();
      }
    }

    if ((ep + 1) % log_every == 0 || ep + 1 == episodes) {
      ObjectiveComponents c;
      c.mi_estimate = acc.last.mi_window;
      c.entropy_nats = acc.last.entropy_nats;
      c.latency_ms = acc.epoch_steps ? acc.epoch_latency / static_cast<double>(acc.epoch_steps) : 0.0;
      c.tokens = acc.epoch_max_tokens;
      c.epsilon_hat = epoch_sufficiency(*env, config.agent.probe_temperature, acc.epoch_visits);
      if (const auto* lq = dynamic_cast<const LinearQ*>(policy.get()); lq && !probes.empty()) {
        const auto n = sensitivity_norms(*lq, probes.back(), 1e-3);
        c.sensitivity_q = n.q;
        c.sensitivity_pi = n.pi;
      }
      const double td = loop.take_td_loss();
      const double rl_loss = dynamic_cast<const SoftmaxPolicy*>(policy.get())
                                 ? -epoch_return / static_cast<double>(std::max<std::uint64_t>(1, epoch_episodes))
                                 : td;
      const double progress = static_cast<double>(ep + 1) / static_cast<double>(episodes);
      ordered_json l;
      l["epoch"] = epoch++;
      l["episodes"] = ep + 1;
      l["progress"] = progress;
      l["rl_loss"] = rl_loss;
      l["mi"] = c.mi_estimate;
      l["entropy_nats"] = c.entropy_nats;
      l["latency_ms"] = c.latency_ms;
      l["tokens"] = c.tokens;
      l["epsilon_hat"] = c.epsilon_hat;
      l["sensitivity_q"] = c.sensitivity_q;
      l["sensitivity_pi"] = c.sensitivity_pi;
      l["lagrangian"] = lagrangian(c, config.budget);
      l["joint_loss"] = joint_loss(rl_loss, c, config.loss_weights, config.budget, progress);
      l["mean_return"] = epoch_return / static_cast<double>(std::max<std::uint64_t>(1, epoch_episodes));
      l["salient_tokens"] = salient_line(acc.epoch_summary_tokens);
      losses_out << l.dump() << '\n';
      acc.epoch_latency = acc.epoch_tokens = 0.0;
      acc.epoch_max_tokens = 0;
      acc.epoch_steps = 0;
      acc.epoch_visits.clear();
      acc.epoch_summary_tokens.clear();
      epoch_return = 0.0;
      epoch_episodes = 0;
    }
  }

  // --- run summary ---
  ordered_json s;
  s["schema"] = kSummarySchema;
  s["run_id"] = run_id;
  s["config_run_id"] = config.run_id;
  s["baseline"] = to_string(baseline);
  s["seed"] = seed;
  s["env"] = env->kind();
  s["policy"] = policy->name();
  s["summarizer"] = summarized ? summarizer_name(config.summarizer) : std::string(to_string(baseline));
  s["token_cap"] = config.budget.token_cap;
  s["update_mode"] = to_string(config.budget.update_mode);
  s["factors"] = {{"cap", summarizer_rank(config.summarizer)},
                  {"tok", config.budget.token_cap},
                  {"upd", update_rank(config.budget.update_mode)}};
  s["status"] = result.failed ? "partial" : "ok";
  if (result.failed) s["error"] = result.error;
  s["episodes"] = episode_reward.size();
  s["steps"] = acc.steps;
  const std::size_t final_from = episode_reward.size() >= 10 ? episode_reward.size() - episode_reward.size() / 10 : 0;
  s["mean_reward"] = mean_of(episode_reward, 0);
  s["final_mean_reward"] = mean_of(episode_reward, final_from);
  if (env->kind() == "gridworld") {
    s["success_rate"] = mean_of(episode_success, 0);
    s["final_success_rate"] = mean_of(episode_success, final_from);
  }
  s["cumulative_regret"] = loop.regret().cumulative;
  try {
    s["regret_slope"] = sqrt_scaling_slope(acc.cumulative_regret, acc.cumulative_regret.size() / 10);
  } catch (const std::exception& e) {
    s["regret_slope_notice"] = e.what();
  }
  const double steps_d = static_cast<double>(std::max<std::uint64_t>(1, acc.steps));
  s["mean_latency_ms"] = acc.latency_sum / steps_d;
  if (config.measure_wall_clock) s["mean_latency_ms_measured"] = acc.measured_sum / steps_d;
  s["mean_tokens"] = acc.tokens_sum / steps_d;
  s["max_tokens"] = acc.max_tokens;
  s["budget_violations"] = acc.violations;
  s["over_budget_responses"] = acc.over_budget;
  s["summarizer_errors"] = acc.summarizer_errors;
  s["timestamp_violations"] = acc.stamp_violations;
  s["reward_per_ms"] = acc.latency_sum > 0.0 ? mean_of(episode_reward, 0) * static_cast<double>(episode_reward.size()) / acc.latency_sum : 0.0;
  if (summarized) {
    s["refresh_count"] = acc.refresh_steps.size();
    s["schedule_conforms"] = acc.refresh_steps == predicted_refresh_steps(config.budget.update_mode, acc.steps);
  } else {
    s["refresh_count"] = baseline == Baseline::Raw ? acc.steps : 0;
  }

  // Stability of the final policy on recently visited augmented states.
  if (!probes.empty()) {
    const auto catalog = env->distractor_tokens();
    const std::int64_t cap = summarized ? config.budget.token_cap : std::numeric_limits<std::int64_t>::max();
    double total = 0.0;
    for (const auto& p : probes) total += stability_probe(*policy, p, catalog, cap);
    s["stability"] = total / static_cast<double>(probes.size());
  }

  // Mutual information between the context mode and the summary content.
  if (!acc.mode_projection.empty()) {
    std::map<std::vector<std::uint32_t>, std::size_t> cols;
    for (const auto& [key, _] : acc.mode_projection) cols.try_emplace(key.second, cols.size());
    JointCounts counts(env->num_context_modes(), cols.size());
    for (const auto& [key, n] : acc.mode_projection) counts.add(key.first, cols.at(key.second), n);
    s["exact_mi"] = exact_mi(counts);
    if (config.mi.enabled) {
      DiscreteJointSampler sampler(counts);
      Rng rng(derive_seed(seed, 0x6d69));
      for (const auto& [bound, name] : {std::pair{MiBound::Mine, "mine_estimate"}, std::pair{MiBound::InfoNce, "infonce_estimate"}}) {
        try {
          auto trained = train_critic(bound, sampler, CriticParameters::bilinear(counts.rows(), counts.cols()),
                                      config.mi.steps, config.mi.learning_rate, config.mi.batch_size, rng);
          s[name] = evaluate_bound(bound, sampler, trained.params, config.mi.eval_batch, config.mi.eval_batches, rng);
        } catch (const TrainingDiverged& e) {
          s[std::string(name) + "_notice"] = e.what();
        }
      }
    }
  }
  try {
    const auto fit = fit_power_law(acc.latency_samples);
    s["power_law"] = {{"beta0", fit.beta0}, {"beta1", fit.beta1}, {"alpha", fit.alpha}, {"r_squared", fit.r_squared}};
  } catch (const std::exception& e) {
    s["power_law_notice"] = e.what();
  }
  result.summary = std::move(s);
  return result;
}

}  // namespace ctxmdp

namespace ctxmdp {

namespace {

struct Plan {
  ExperimentConfig config;
  Baseline baseline;
  std::uint64_t seed;
  std::string run_id;
  std::string value;
};

std::vector<RunResult> execute_plans(const std::vector<Plan>& plans, const fs::path& out_dir, std::size_t jobs) {
  std::vector<RunResult> results(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      const auto& p = plans[i];
      try {
        results[i] = execute_run(p.config, p.baseline, p.seed, p.run_id, out_dir);
      } catch (const std::exception& e) {
        results[i].run_id = p.run_id;
        results[i].baseline = p.baseline;
        results[i].seed = p.seed;
        results[i].failed = true;
        results[i].error = e.what();
        results[i].summary = ordered_json{{"schema", kSummarySchema}, {"run_id", p.run_id}, {"status", "failed"},
                                          {"error", e.what()}};
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, plans.size()));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

void add_efficiency(std::vector<RunResult>& results, const std::map<std::uint64_t, const RunResult*>& reference) {
  for (auto& r : results) {
    if (r.failed || r.baseline == Baseline::None) continue;
    auto it = reference.find(r.seed);
    if (it == reference.end() || it->second->failed) continue;
    const double gain = r.summary.value("mean_reward", 0.0) - it->second->summary.value("mean_reward", 0.0);
    if (auto eff = context_efficiency(gain, r.summary.value("mean_tokens", 0.0))) {
      r.summary["efficiency"] = *eff;
    } else {
      r.summary["efficiency_notice"] = "no context tokens used";
    }
  }
}

void write_summaries(const std::vector<RunResult>& results, const fs::path& out_dir, const std::string& config_run_id) {
  ordered_json index;
  index["schema"] = "ctxmdp.runs/1";
  index["config_run_id"] = config_run_id;
  index["runs"] = ordered_json::array();
  for (const auto& r : results) {
    fs::create_directories(out_dir / r.run_id);
    std::ofstream out(out_dir / r.run_id / "summary.json", std::ios::binary | std::ios::trunc);
    out << r.summary.dump(2) << '\n';
    index["runs"].push_back(ordered_json{{"run_id", r.run_id},
                                         {"baseline", to_string(r.baseline)},
                                         {"seed", r.seed},
                                         {"status", r.failed ? (r.summary.contains("steps") ? "partial" : "failed") : "ok"}});
  }
  std::ofstream out(out_dir / "runs.json", std::ios::binary | std::ios::trunc);
  out << index.dump(2) << '\n';
}

std::string sanitize(std::string text) {
  for (auto& ch : text) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return text;
}

std::string csv_number(const ordered_json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) return "";
  std::ostringstream os;
  os.precision(10);
  os << j[key].get<double>();
  return os.str();
}

}  // namespace

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const fs::path& out_dir, std::size_t jobs) {
  config.validate();
  fs::create_directories(out_dir);
  std::vector<Plan> plans;
  for (auto seed : config.seeds) {
    for (auto b : config.baselines) {
      plans.push_back(Plan{config, b, seed, config.run_id + "-" + std::string(to_string(b)) + "-s" + std::to_string(seed), ""});
    }
  }
  auto results = execute_plans(plans, out_dir, jobs);
  std::map<std::uint64_t, const RunResult*> reference;
  for (const auto& r : results) {
    if (r.baseline == Baseline::None) reference[r.seed] = &r;
  }
  add_efficiency(results, reference);
  write_summaries(results, out_dir, config.run_id);
  return results;
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "tokens") return SweepAxis::Tokens;
  if (text == "update_mode") return SweepAxis::UpdateMode;
  if (text == "summarizer") return SweepAxis::Summarizer;
  throw ConfigError("unknown sweep axis '" + text + "' (expected tokens, update_mode, summarizer)");
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                                const fs::path& out_dir, std::size_t jobs) {
  config.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> variants;
  for (const auto& v : values) {
    ExperimentConfig c = config;
    try {
      switch (axis) {
        case SweepAxis::Tokens: {
          std::size_t used = 0;
          c.budget.token_cap = std::stoll(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
          break;
        }
        case SweepAxis::UpdateMode:
          c.budget.update_mode = parse_update_mode(v);
          break;
        case SweepAxis::Summarizer:
          if (v == "truncate") c.summarizer = Truncate{};
          else if (v == "top_frequency") c.summarizer = TopFrequency{};
          else if (v == "relevance") {
            if (!std::holds_alternative<RelevanceExtract>(config.summarizer)) {
              RelevanceExtract rel;
              const auto env = make_environment(config.env);
              for (std::uint32_t m = 0; m < env->num_context_modes(); ++m) rel.scores[m] = 1.0;
              c.summarizer = rel;
            }
          } else if (v == "external") {
            if (!std::holds_alternative<External>(config.summarizer)) {
              c.summarizer = External{resolve_external_endpoint(""), 2000};
            }
          } else {
            throw std::invalid_argument("unknown summarizer '" + v + "'");
          }
          break;
      }
      c.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad sweep value '" + v + "': " + e.what());
    }
    variants.push_back(std::move(c));
  }

  const std::string axis_name = axis == SweepAxis::Tokens ? "tokens" : axis == SweepAxis::UpdateMode ? "update_mode" : "summarizer";
  std::vector<Plan> plans;
  for (auto seed : config.seeds) {
    plans.push_back(Plan{config, Baseline::None, seed, config.run_id + "-reference-s" + std::to_string(seed), ""});
    for (std::size_t i = 0; i < values.size(); ++i) {
      plans.push_back(Plan{variants[i], Baseline::Summarized, seed,
                           config.run_id + "-" + axis_name + "-" + sanitize(values[i]) + "-s" + std::to_string(seed),
                           values[i]});
    }
  }
  fs::create_directories(out_dir);
  auto results = execute_plans(plans, out_dir, jobs);
  std::map<std::uint64_t, const RunResult*> reference;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].value.empty()) reference[plans[i].seed] = &results[i];
  }
  add_efficiency(results, reference);
  write_summaries(results, out_dir, config.run_id);

  std::vector<SweepRow> rows;
  std::map<std::uint64_t, std::pair<double, double>> previous;  // seed -> (tokens, perf)
  std::ofstream csv(out_dir / "sweep.csv", std::ios::binary | std::ios::trunc);
  csv << "axis,value,seed,run_id,mean_reward,final_mean_reward,cumulative_regret,success_rate,mean_tokens,"
         "mean_latency_ms,refresh_count,exact_mi,stability,efficiency,elasticity,reward_per_ms\n";
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].value.empty()) continue;
    const auto& s = results[i].summary;
    std::string elasticity;
    if (axis == SweepAxis::Tokens && !results[i].failed) {
      const double tok = static_cast<double>(s.value("token_cap", 0));
      const double perf = s.value("mean_reward", 0.0);
      auto it = previous.find(plans[i].seed);
      if (it != previous.end() && it->second.second > 0.0 && tok > it->second.first && it->second.first > 0.0) {
        std::ostringstream os;
        os.precision(10);
        os << token_elasticity(it->second.second, perf, it->second.first, tok);
        elasticity = os.str();
      }
      previous[plans[i].seed] = {tok, perf};
    }
    csv << axis_name << ',' << plans[i].value << ',' << plans[i].seed << ',' << plans[i].run_id << ','
        << csv_number(s, "mean_reward") << ',' << csv_number(s, "final_mean_reward") << ','
        << csv_number(s, "cumulative_regret") << ',' << csv_number(s, "success_rate") << ','
        << csv_number(s, "mean_tokens") << ',' << csv_number(s, "mean_latency_ms") << ','
        << csv_number(s, "refresh_count") << ',' << csv_number(s, "exact_mi") << ',' << csv_number(s, "stability")
        << ',' << csv_number(s, "efficiency") << ',' << elasticity << ',' << csv_number(s, "reward_per_ms") << '\n';
    rows.push_back(SweepRow{plans[i].value, plans[i].seed, s});
  }
  return rows;
}

}  // namespace ctxmdp
