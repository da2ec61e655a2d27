// Policies over augmented states, the meta-policy over summary maintenance
// and the refresh schedulers.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctxmdp/core.hpp"

namespace ctxmdp {

struct Transition {
  AugmentedState from;
  ActionId action;
  double reward = 0.0;
  AugmentedState to;
  bool done = false;
};

// Exploration rate: constant epsilon, or min(1, scale / sqrt(n + 1)) after n
// action selections.
struct Exploration {
  enum class Schedule { Constant, InverseSqrt };
  Schedule schedule = Schedule::Constant;
  double epsilon = 0.1;
  double scale = 1.0;

  double at(std::uint64_t n) const;
  void validate() const;
};

// Step size lr * tau / (tau + n) after n updates of the same entry; tau = 0
// keeps it constant.
struct StepSize {
  double learning_rate = 0.1;
  double decay_visits = 0.0;

  double at(std::uint64_t n) const;
  void validate() const;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  std::size_t num_actions() const { return num_actions_; }

  // h(s~): the action distribution reported to probes. Value-based policies
  // use a Boltzmann distribution at `probe_temperature`.
  virtual std::vector<double> action_distribution(const AugmentedState& s) const = 0;
  virtual ActionId greedy_action(const AugmentedState& s) const = 0;
  virtual ActionId select_action(const AugmentedState& s, Rng& rng) = 0;

  // Returns the TD error for value learners, 0 otherwise.
  virtual double observe(const Transition&) { return 0.0; }
  virtual void end_episode(const std::vector<Transition>&) {}

  // Action values if the policy has them; empty otherwise.
  virtual std::vector<double> action_values(const AugmentedState&) const { return {}; }

  double probe_temperature = 0.1;

 protected:
  explicit Policy(std::size_t num_actions);
  std::size_t num_actions_;
};

// Key of an augmented state for tabular maps: base state plus the bag of tokens.
using AugmentedKey = std::pair<std::size_t, std::vector<std::uint32_t>>;
AugmentedKey augmented_key(const AugmentedState& s);

class TabularQ final : public Policy {
 public:
  TabularQ(std::size_t num_actions, double discount, StepSize step, Exploration exploration);

  std::string name() const override { return "tabular_q"; }
  std::vector<double> action_distribution(const AugmentedState& s) const override;
  ActionId greedy_action(const AugmentedState& s) const override;
  ActionId select_action(const AugmentedState& s, Rng& rng) override;
  double observe(const Transition& tr) override { return q_update(tr); }
  std::vector<double> action_values(const AugmentedState& s) const override;

  // Q(s,a) += lr * (r + gamma * (done ? 0 : max Q(s',.)) - Q(s,a)). Returns the TD error.
  double q_update(const Transition& tr);
  void set_values(const AugmentedState& s, std::vector<double> values);
  double epsilon() const { return exploration_.at(selections_); }
  std::size_t table_size() const { return values_.size(); }
  // Value of entries not seen yet; a positive value drives optimistic exploration.
  void set_initial_value(double v) { initial_value_ = v; }

 private:
  double initial_value_ = 0.0;
  double discount_;
  StepSize step_;
  Exploration exploration_;
  std::uint64_t selections_ = 0;
  std::map<AugmentedKey, std::vector<double>> values_;
  std::map<AugmentedKey, std::vector<std::uint64_t>> visits_;
};

// Q(s, a) = w_{s,a} . [1; embed(C)], trained by normalized semi-gradient TD.
class LinearQ final : public Policy {
 public:
  LinearQ(std::size_t num_states, std::size_t num_actions, std::size_t embed_dim, double discount,
          StepSize step, Exploration exploration);

  std::string name() const override { return "linear_q"; }
  std::vector<double> action_distribution(const AugmentedState& s) const override;
  ActionId greedy_action(const AugmentedState& s) const override;
  ActionId select_action(const AugmentedState& s, Rng& rng) override;
  double observe(const Transition& tr) override { return q_update(tr); }
  std::vector<double> action_values(const AugmentedState& s) const override;

  double q_update(const Transition& tr);
  Eigen::VectorXd features(const ContextSummary& summary) const;
  // Action values from an explicit embedding (used by finite-difference probes).
  std::vector<double> values_from_embedding(std::size_t state, const Eigen::VectorXd& embed) const;
  Eigen::VectorXd& weights(std::size_t state, std::size_t action);
  std::size_t embed_dim() const { return embed_dim_; }
  // Sets every bias weight, so all initial action values equal v.
  void set_initial_value(double v);

 private:
  std::size_t num_states_;
  std::size_t embed_dim_;
  double discount_;
  StepSize step_;
  Exploration exploration_;
  std::uint64_t selections_ = 0;
  std::vector<Eigen::VectorXd> w_;  // [state * num_actions + action]
  std::vector<std::uint64_t> visits_;
};

// Tabular softmax policy trained with REINFORCE and a per-state running-mean baseline.
class SoftmaxPolicy final : public Policy {
 public:
  SoftmaxPolicy(std::size_t num_actions, double temperature, double learning_rate, double discount);

  std::string name() const override { return "softmax"; }
  std::vector<double> action_distribution(const AugmentedState& s) const override;
  ActionId greedy_action(const AugmentedState& s) const override;
  ActionId select_action(const AugmentedState& s, Rng& rng) override;
  void end_episode(const std::vector<Transition>& episode) override { reinforce_update(episode); }

  // logits += lr * grad log pi(a|s) * (G_t - b(s)); b(s) tracks the mean return.
  void reinforce_update(const std::vector<Transition>& episode);

  std::vector<double> logits(const AugmentedState& s) const;
  void set_logits(const AugmentedState& s, std::vector<double> values);
  double baseline(const AugmentedState& s) const;
  // d log pi(a|s) / d logits = (onehot(a) - pi) / temperature.
  std::vector<double> log_policy_gradient(const AugmentedState& s, ActionId a) const;
  double temperature() const { return temperature_; }

 private:
  double temperature_;
  double learning_rate_;
  double discount_;
  std::map<AugmentedKey, std::vector<double>> logits_;
  std::map<AugmentedKey, std::pair<double, std::uint64_t>> baseline_;  // mean, count
};

class UniformRandom final : public Policy {
 public:
  explicit UniformRandom(std::size_t num_actions) : Policy(num_actions) {}

  std::string name() const override { return "uniform"; }
  std::vector<double> action_distribution(const AugmentedState& s) const override;
  ActionId greedy_action(const AugmentedState&) const override { return ActionId{0}; }
  ActionId select_action(const AugmentedState& s, Rng& rng) override;
};

struct MetaThresholds {
  double entropy_high = 1e9;
  double latency_high = 120.0;
  std::int64_t age_max = 8;
};

struct MetaPolicy {
  enum class Mode { Heuristic, EpsilonGreedy };
  MetaThresholds thresholds;
  Mode mode = Mode::Heuristic;
  double epsilon = 0.0;

  void validate() const;
};

// Compress if latency or entropy is high, Refresh if the summary is old,
// Keep otherwise; EpsilonGreedy replaces that choice by a uniform one with
// probability epsilon.
MetaAction meta_heuristic(const MetaThresholds& thresholds, const BudgetSignals& signals);
MetaAction meta_select(const MetaPolicy& meta, const BudgetSignals& signals, Rng& rng);

class UpdateScheduler {
 public:
  explicit UpdateScheduler(UpdateMode mode);

  // Whether a refresh is due at global step t.
  bool decide(std::uint64_t t) const;
  void on_refresh(std::uint64_t t);
  const UpdateMode& mode() const { return mode_; }

 private:
  UpdateMode mode_;
  std::optional<std::uint64_t> last_refresh_;
};

inline bool scheduler_decide(const UpdateScheduler& scheduler, std::uint64_t t) {
  return scheduler.decide(t);
}

// Replays a scheduler whose due steps all refresh; returns the due steps in [0, steps).
std::vector<std::uint64_t> predicted_refresh_steps(const UpdateMode& mode, std::uint64_t steps);

}  // namespace ctxmdp
