#include "ctxmdp/envs.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxmdp/numeric.hpp"

namespace ctxmdp {

namespace {

constexpr double kValueIterationTolerance = 1e-10;

std::vector<double> normalized_prior(const std::vector<double>& given, std::size_t modes) {
  if (given.empty()) return std::vector<double>(modes, 1.0 / static_cast<double>(modes));
  return given;
}

void validate_distribution(const std::vector<double>& p, std::size_t expected, const char* what) {
  if (p.empty()) return;
  if (p.size() != expected) {
    throw std::invalid_argument(std::string(what) + " must have one entry per context mode");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " entries must be >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + " must sum to 1 within 1e-9");
  }
}

}  // namespace

void BanditConfig::validate() const {
  if (num_contexts < 1) throw std::invalid_argument("bandit.num_contexts must be >= 1");
  if (num_arms < 1) throw std::invalid_argument("bandit.num_arms must be >= 1");
  if (mean_matrix.size() != num_contexts) {
    throw std::invalid_argument("bandit.mean_matrix must have num_contexts rows");
  }
  for (const auto& row : mean_matrix) {
    if (row.size() != num_arms) {
      throw std::invalid_argument("bandit.mean_matrix rows must have num_arms entries");
    }
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("bandit.mean_matrix entries must lie in [0,1]");
      }
    }
  }
  validate_distribution(context_distribution, num_contexts, "bandit.context_distribution");
  if (noise_vocab < 1 && distractor_count > 0) {
    throw std::invalid_argument("bandit.noise_vocab must be >= 1 when distractors are used");
  }
}

void GridworldConfig::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("gridworld width/height must be >= 1");
  auto inside = [&](Cell c) { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; };
  if (!inside(start)) throw std::invalid_argument("gridworld.start lies outside the grid");
  if (!inside(goal)) throw std::invalid_argument("gridworld.goal lies outside the grid");
  for (const auto& h : holes) {
    if (!inside(h)) throw std::invalid_argument("gridworld.holes contains a cell outside the grid");
    if (h == goal) throw std::invalid_argument("gridworld.goal must not be a hole");
    if (h == start) throw std::invalid_argument("gridworld.start must not be a hole");
  }
  if (context_modes.empty()) throw std::invalid_argument("gridworld.context_modes must be non-empty");
  for (const auto& m : context_modes) {
    if (!(m.slip >= 0.0 && m.slip <= 1.0)) {
      throw std::invalid_argument("gridworld.context_modes slip must lie in [0,1]");
    }
  }
  validate_distribution(context_prior, context_modes.size(), "gridworld.context_prior");
  if (horizon < 1) throw std::invalid_argument("gridworld.horizon must be >= 1");
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("gridworld.discount must lie in [0,1)");
  }
  if (!(drift_probability >= 0.0 && drift_probability <= 1.0)) {
    throw std::invalid_argument("gridworld.drift_probability must lie in [0,1]");
  }
  if (noise_vocab < 1 && distractor_count > 0) {
    throw std::invalid_argument("gridworld.noise_vocab must be >= 1 when distractors are used");
  }
}

// ---------------------------------------------------------------------------

Environment::Environment(std::vector<double> prior, std::size_t noise_vocab,
                         std::size_t distractors)
    : prior_(std::move(prior)), noise_vocab_(noise_vocab), distractors_(distractors) {}

double Environment::optimal_value(std::size_t mode, StateId state) const {
  if (is_terminal(state)) return 0.0;
  const auto& q = optimal_q(mode).at(state.index);
  return *std::max_element(q.begin(), q.end());
}

std::vector<Token> Environment::distractor_tokens() const {
  std::vector<Token> out;
  out.reserve(noise_vocab_);
  for (std::size_t i = 0; i < noise_vocab_; ++i) {
    out.push_back(Token{static_cast<std::uint32_t>(prior_.size() + i)});
  }
  return out;
}

std::size_t Environment::draw_mode() {
  std::discrete_distribution<std::size_t> dist(prior_.begin(), prior_.end());
  return dist(rng_);
}

ExogenousSignal Environment::make_raw_context() {
  ExogenousSignal signal;
  signal.tokens.reserve(distractors_ + 1);
  std::uniform_int_distribution<std::size_t> noise(0, noise_vocab_ == 0 ? 0 : noise_vocab_ - 1);
  for (std::size_t i = 0; i < distractors_; ++i) {
    signal.tokens.push_back(Token{static_cast<std::uint32_t>(prior_.size() + noise(rng_))});
  }
  std::uniform_int_distribution<std::size_t> position(0, distractors_);
  const auto at = static_cast<std::ptrdiff_t>(position(rng_));
  signal.tokens.insert(signal.tokens.begin() + at, Token{static_cast<std::uint32_t>(mode_)});
  return signal;
}

// ---------------------------------------------------------------------------

ContextualBandit::ContextualBandit(BanditConfig config)
    : Environment(normalized_prior(config.context_distribution, config.num_contexts),
                  config.noise_vocab, config.distractor_count),
      config_(std::move(config)) {
  config_.validate();
  q_.resize(config_.num_contexts);
  for (std::size_t m = 0; m < config_.num_contexts; ++m) q_[m] = {config_.mean_matrix[m]};
}

EnvObservation ContextualBandit::reset(std::uint64_t seed) {
  rng_.seed(seed);
  mode_ = draw_mode();
  done_ = false;
  return EnvObservation{StateId{0}, make_raw_context(), 0.0, false};
}

EnvObservation ContextualBandit::step(ActionId action) {
  if (done_) throw EnvError("bandit: step called on a finished episode");
  if (action.index >= config_.num_arms) throw EnvError("bandit: action index out of range");
  std::bernoulli_distribution pull(config_.mean_matrix[mode_][action.index]);
  const double reward = pull(rng_) ? 1.0 : 0.0;
  done_ = true;
  return EnvObservation{StateId{0}, ExogenousSignal{}, reward, true};
}

const std::vector<std::vector<double>>& ContextualBandit::optimal_q(std::size_t mode) const {
  return q_.at(mode);
}

double ContextualBandit::policy_value(std::size_t mode, StateId,
                                      std::span<const std::size_t> actions) const {
  return config_.mean_matrix.at(mode).at(actions[0]);
}

// ---------------------------------------------------------------------------

Gridworld::Gridworld(GridworldConfig config)
    : Environment(normalized_prior(config.context_prior, config.context_modes.size()),
                  config.noise_vocab, config.distractor_count),
      config_(std::move(config)) {
  config_.validate();
  const std::size_t n = num_states();
  terminal_.assign(n, false);
  goal_index_ = cell_state(config_.goal).index;
  terminal_[goal_index_] = true;
  for (const auto& h : config_.holes) terminal_[cell_state(h).index] = true;

  // Value iteration per mode; reward is paid on arrival at the goal.
  q_.resize(config_.context_modes.size());
  const double gamma = config_.discount;
  for (std::size_t m = 0; m < q_.size(); ++m) {
    std::vector<double> v(n, 0.0);
    auto& q = q_[m];
    q.assign(n, std::vector<double>(4, 0.0));
    for (int iter = 0; iter < 1000000; ++iter) {
      double residual = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        if (terminal_[s]) continue;
        for (std::size_t a = 0; a < 4; ++a) {
          double value = 0.0;
          for (const auto& o : transitions(m, s, a)) {
            value += o.probability * (arrival_reward(o.next) + (terminal_[o.next] ? 0.0 : gamma * v[o.next]));
          }
          q[s][a] = value;
        }
      }
      for (std::size_t s = 0; s < n; ++s) {
        if (terminal_[s]) continue;
        const double best = *std::max_element(q[s].begin(), q[s].end());
        residual = std::max(residual, std::abs(best - v[s]));
        v[s] = best;
      }
      if (residual < kValueIterationTolerance * (1.0 - gamma) || residual == 0.0) break;
    }
    // Final sweep so Q is consistent with the converged V.
    for (std::size_t s = 0; s < n; ++s) {
      if (terminal_[s]) continue;
      for (std::size_t a = 0; a < 4; ++a) {
        double value = 0.0;
        for (const auto& o : transitions(m, s, a)) {
          value += o.probability * (arrival_reward(o.next) + (terminal_[o.next] ? 0.0 : gamma * v[o.next]));
        }
        q[s][a] = value;
      }
    }
  }
}

std::size_t Gridworld::num_states() const {
  return static_cast<std::size_t>(config_.width) * static_cast<std::size_t>(config_.height);
}

StateId Gridworld::cell_state(Cell c) const {
  return StateId{static_cast<std::size_t>(c.y) * static_cast<std::size_t>(config_.width) +
                 static_cast<std::size_t>(c.x)};
}

Cell Gridworld::state_cell(StateId s) const {
  const auto w = static_cast<std::size_t>(config_.width);
  return Cell{static_cast<int>(s.index % w), static_cast<int>(s.index / w)};
}

bool Gridworld::is_terminal(StateId state) const { return terminal_.at(state.index); }

std::size_t Gridworld::move(std::size_t state, std::size_t direction) const {
  Cell c = state_cell(StateId{state});
  switch (direction) {
    case kLeft: c.x = std::max(0, c.x - 1); break;
    case kDown: c.y = std::min(config_.height - 1, c.y + 1); break;
    case kRight: c.x = std::min(config_.width - 1, c.x + 1); break;
    case kUp: c.y = std::max(0, c.y - 1); break;
    default: break;
  }
  return cell_state(c).index;
}

double Gridworld::arrival_reward(std::size_t next) const { return next == goal_index_ ? 1.0 : 0.0; }

std::vector<Gridworld::Outcome> Gridworld::transitions(std::size_t mode, std::size_t state,
                                                       std::size_t action) const {
  const double slip = config_.context_modes.at(mode).slip;
  const std::size_t moves[3] = {action, (action + 1) % 4, (action + 3) % 4};
  const double probs[3] = {1.0 - slip, 0.5 * slip, 0.5 * slip};
  std::vector<Outcome> out;
  for (int i = 0; i < 3; ++i) {
    if (probs[i] == 0.0) continue;
    const std::size_t next = move(state, moves[i]);
    auto it = std::find_if(out.begin(), out.end(), [&](const Outcome& o) { return o.next == next; });
    if (it == out.end()) {
      out.push_back(Outcome{probs[i], next});
    } else {
      it->probability += probs[i];
    }
  }
  return out;
}

EnvObservation Gridworld::reset(std::uint64_t seed) {
  rng_.seed(seed);
  mode_ = draw_mode();
  position_ = cell_state(config_.start).index;
  steps_ = 0;
  reached_goal_ = false;
  done_ = false;
  return EnvObservation{StateId{position_}, make_raw_context(), 0.0, false};
}

EnvObservation Gridworld::step(ActionId action) {
  if (done_) throw EnvError("gridworld: step called on a finished episode");
  if (action.index >= 4) throw EnvError("gridworld: action index out of range");
  const double slip = config_.context_modes[mode_].slip;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng_);
  std::size_t direction = action.index;
  if (u >= 1.0 - slip) {
    direction = (u < 1.0 - 0.5 * slip) ? (action.index + 1) % 4 : (action.index + 3) % 4;
  }
  position_ = move(position_, direction);
  ++steps_;
  const double reward = arrival_reward(position_);
  reached_goal_ = position_ == goal_index_;
  done_ = terminal_[position_] || steps_ >= config_.horizon;
  if (!done_ && config_.drift_probability > 0.0) {
    std::bernoulli_distribution drift(config_.drift_probability);
    if (drift(rng_)) mode_ = draw_mode();
  }
  ExogenousSignal raw = done_ ? ExogenousSignal{} : make_raw_context();
  return EnvObservation{StateId{position_}, std::move(raw), reward, done_};
}

const std::vector<std::vector<double>>& Gridworld::optimal_q(std::size_t mode) const {
  return q_.at(mode);
}

double Gridworld::policy_value(std::size_t mode, StateId state,
                               std::span<const std::size_t> actions) const {
  if (terminal_[state.index]) return 0.0;
  const auto n = static_cast<Eigen::Index>(num_states());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  const double gamma = config_.discount;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (terminal_[static_cast<std::size_t>(s)]) continue;
    for (const auto& o : transitions(mode, static_cast<std::size_t>(s), actions[static_cast<std::size_t>(s)])) {
      b(s) += o.probability * arrival_reward(o.next);
      if (!terminal_[o.next]) a(s, static_cast<Eigen::Index>(o.next)) -= gamma * o.probability;
    }
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  return v(static_cast<Eigen::Index>(state.index));
}

double Gridworld::bellman_residual(std::size_t mode) const {
  const auto& q = q_.at(mode);
  double residual = 0.0;
  for (std::size_t s = 0; s < num_states(); ++s) {
    if (terminal_[s]) continue;
    for (std::size_t a = 0; a < 4; ++a) {
      double target = 0.0;
      for (const auto& o : transitions(mode, s, a)) {
        const double next_v =
            terminal_[o.next] ? 0.0 : *std::max_element(q[o.next].begin(), q[o.next].end());
        target += o.probability * (arrival_reward(o.next) + config_.discount * next_v);
      }
      residual = std::max(residual, std::abs(target - q[s][a]));
    }
  }
  return residual;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  return std::visit(
      [](const auto& c) -> std::unique_ptr<Environment> {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BanditConfig>) {
          return std::make_unique<ContextualBandit>(c);
        } else {
          return std::make_unique<Gridworld>(c);
        }
      },
      config);
}

double optimal_value(const EnvConfig& config, std::size_t mode, StateId state) {
  return make_environment(config)->optimal_value(mode, state);
}

std::vector<double> mode_posterior(const Environment& env, const ContextSummary& summary) {
  const auto& prior = env.context_prior();
  std::vector<double> post(prior.size(), 0.0);
  double mass = 0.0;
  for (const auto& t : summary.tokens) {
    if (env.is_context_token(t) && post[t.symbol] == 0.0) {
      post[t.symbol] = prior[t.symbol];
      mass += prior[t.symbol];
    }
  }
  if (mass <= 0.0) return prior;
  for (double& p : post) p /= mass;
  return post;
}

std::vector<double> mode_indicator(const Environment& env, std::size_t mode) {
  std::vector<double> belief(env.num_context_modes(), 0.0);
  belief.at(mode) = 1.0;
  return belief;
}

ActionDistributions optimal_softmax_policy(const Environment& env, std::span<const double> belief,
                                           double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (belief.size() != env.num_context_modes()) {
    throw std::invalid_argument("belief must have one entry per context mode");
  }
  ActionDistributions out(env.num_states());
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> q(env.num_actions(), 0.0);
    for (std::size_t m = 0; m < belief.size(); ++m) {
      if (belief[m] == 0.0) continue;
      const auto& qm = env.optimal_q(m)[s];
      for (std::size_t a = 0; a < q.size(); ++a) q[a] += belief[m] * qm[a];
    }
    out[s] = softmax(q, temperature);
  }
  return out;
}

}  // namespace ctxmdp
