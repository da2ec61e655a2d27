// Desk-scale contextual MDPs with exact oracles.
//
// Vocabulary layout shared by both environments: symbols [0, M) name the M
// context modes, symbols [M, M + noise_vocab) are distractor tokens. The raw
// exogenous signal of a step is the true mode token inserted at a seeded
// position among D distractors drawn i.i.d. from the distractor range.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ctxmdp/core.hpp"

namespace ctxmdp {

struct BanditConfig {
  std::size_t num_contexts = 2;
  std::size_t num_arms = 2;
  std::vector<std::vector<double>> mean_matrix;  // num_contexts x num_arms, entries in [0,1]
  std::size_t distractor_count = 0;
  std::vector<double> context_distribution;  // empty means uniform
  std::size_t noise_vocab = 16;

  void validate() const;
};

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct ContextModeSpec {
  std::string name;
  double slip = 0.0;
};

struct GridworldConfig {
  int width = 4;
  int height = 4;
  Cell start{0, 0};
  Cell goal{3, 3};
  std::vector<Cell> holes;
  std::vector<ContextModeSpec> context_modes;
  std::vector<double> context_prior;  // empty means uniform
  int horizon = 100;
  std::size_t distractor_count = 0;
  double discount = 0.95;
  std::size_t noise_vocab = 16;
  // Per-step probability of redrawing the context mode; 0 keeps it fixed per episode.
  double drift_probability = 0.0;

  void validate() const;
};

using EnvConfig = std::variant<BanditConfig, GridworldConfig>;

struct EnvObservation {
  StateId state;
  ExogenousSignal raw_context;
  double reward = 0.0;
  bool done = false;
};

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-state action distributions; outer index is the state.
using ActionDistributions = std::vector<std::vector<double>>;

class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvObservation reset(std::uint64_t seed) = 0;
  virtual EnvObservation step(ActionId action) = 0;

  virtual std::size_t num_states() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual double discount() const = 0;
  virtual bool is_terminal(StateId state) const = 0;
  virtual bool reached_goal() const { return false; }
  virtual std::string kind() const = 0;

  // Exact optimal action values under a known mode, [state][action].
  virtual const std::vector<std::vector<double>>& optimal_q(std::size_t mode) const = 0;
  double optimal_value(std::size_t mode, StateId state) const;

  // Value at `state` of the deterministic policy `actions[s]` under `mode`.
  virtual double policy_value(std::size_t mode, StateId state,
                              std::span<const std::size_t> actions) const = 0;

  std::size_t num_context_modes() const { return prior_.size(); }
  std::size_t noise_vocab() const { return noise_vocab_; }
  std::size_t vocab_size() const { return prior_.size() + noise_vocab_; }
  const std::vector<double>& context_prior() const { return prior_; }
  bool is_context_token(Token t) const { return t.symbol < prior_.size(); }
  std::vector<Token> distractor_tokens() const;

  // True mode of the running episode. Used by oracles and logging only.
  std::size_t context_mode() const { return mode_; }
  bool done() const { return done_; }

 protected:
  Environment(std::vector<double> prior, std::size_t noise_vocab, std::size_t distractors);

  std::size_t draw_mode();
  ExogenousSignal make_raw_context();

  Rng rng_;
  std::vector<double> prior_;
  std::size_t noise_vocab_;
  std::size_t distractors_;
  std::size_t mode_ = 0;
  bool done_ = true;
};

class ContextualBandit final : public Environment {
 public:
  explicit ContextualBandit(BanditConfig config);

  EnvObservation reset(std::uint64_t seed) override;
  EnvObservation step(ActionId action) override;
  std::size_t num_states() const override { return 1; }
  std::size_t num_actions() const override { return config_.num_arms; }
  double discount() const override { return 0.0; }
  bool is_terminal(StateId) const override { return false; }
  std::string kind() const override { return "bandit"; }
  const std::vector<std::vector<double>>& optimal_q(std::size_t mode) const override;
  double policy_value(std::size_t mode, StateId state,
                      std::span<const std::size_t> actions) const override;

  const BanditConfig& config() const { return config_; }

 private:
  BanditConfig config_;
  std::vector<std::vector<std::vector<double>>> q_;  // [mode][state=0][arm]
};

class Gridworld final : public Environment {
 public:
  static constexpr std::size_t kLeft = 0, kDown = 1, kRight = 2, kUp = 3;

  explicit Gridworld(GridworldConfig config);

  EnvObservation reset(std::uint64_t seed) override;
  EnvObservation step(ActionId action) override;
  std::size_t num_states() const override;
  std::size_t num_actions() const override { return 4; }
  double discount() const override { return config_.discount; }
  bool is_terminal(StateId state) const override;
  bool reached_goal() const override { return reached_goal_; }
  std::string kind() const override { return "gridworld"; }
  const std::vector<std::vector<double>>& optimal_q(std::size_t mode) const override;
  double policy_value(std::size_t mode, StateId state,
                      std::span<const std::size_t> actions) const override;

  StateId cell_state(Cell c) const;
  Cell state_cell(StateId s) const;
  const GridworldConfig& config() const { return config_; }

  struct Outcome {
    double probability;
    std::size_t next;
  };
  // Transition outcomes of (state, action) under `mode`, merged per next state.
  std::vector<Outcome> transitions(std::size_t mode, std::size_t state, std::size_t action) const;

  // Largest Bellman residual of optimal_q(mode) (sanity diagnostic).
  double bellman_residual(std::size_t mode) const;

 private:
  std::size_t move(std::size_t state, std::size_t direction) const;
  double arrival_reward(std::size_t next) const;

  GridworldConfig config_;
  std::vector<bool> terminal_;
  std::size_t goal_index_ = 0;
  std::size_t position_ = 0;
  int steps_ = 0;
  bool reached_goal_ = false;
  std::vector<std::vector<std::vector<double>>> q_;  // [mode][state][action]
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

double optimal_value(const EnvConfig& config, std::size_t mode, StateId state);

// Belief over context modes implied by a summary: the prior restricted to the
// modes whose tokens the summary contains, or the prior itself when none do.
std::vector<double> mode_posterior(const Environment& env, const ContextSummary& summary);

// Point-mass belief for full-context conditioning.
std::vector<double> mode_indicator(const Environment& env, std::size_t mode);

// Softmax over belief-averaged exact Q-values, per state.
ActionDistributions optimal_softmax_policy(const Environment& env, std::span<const double> belief,
                                           double temperature);

}  // namespace ctxmdp
