#include "ctxmdp/agent.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ctxmdp/numeric.hpp"

namespace ctxmdp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    if (x < probs[i]) return i;
    x -= probs[i];
  }
  return probs.size() - 1;
}

ActionId epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (epsilon > 0.0 && u(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
    return ActionId{pick(rng)};
  }
  return ActionId{argmax(q)};
}

}  // namespace

double Exploration::at(std::uint64_t n) const {
  if (schedule == Schedule::Constant) return epsilon;
  return std::min(1.0, scale / std::sqrt(static_cast<double>(n) + 1.0));
}

void Exploration::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("exploration scale must be >= 0");
}

double StepSize::at(std::uint64_t n) const {
  if (decay_visits <= 0.0) return learning_rate;
  return learning_rate * decay_visits / (decay_visits + static_cast<double>(n));
}

void StepSize::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (!(decay_visits >= 0.0)) throw std::invalid_argument("decay_visits must be >= 0");
}

Policy::Policy(std::size_t num_actions) : num_actions_(num_actions) {
  if (num_actions == 0) throw std::invalid_argument("policy needs >= 1 action");
}

AugmentedKey augmented_key(const AugmentedState& s) {
  return {s.state.index, bag_key(s.summary.tokens)};
}

// --- TabularQ --------------------------------------------------------------

TabularQ::TabularQ(std::size_t num_actions, double discount, StepSize step, Exploration exploration)
    : Policy(num_actions), discount_(discount), step_(step), exploration_(exploration) {
  step_.validate();
  exploration_.validate();
  if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
}

std::vector<double> TabularQ::action_values(const AugmentedState& s) const {
  auto it = values_.find(augmented_key(s));
  if (it == values_.end()) return std::vector<double>(num_actions_, initial_value_);
  return it->second;
}

void TabularQ::set_values(const AugmentedState& s, std::vector<double> values) {
  if (values.size() != num_actions_) throw std::invalid_argument("set_values: wrong action count");
  values_[augmented_key(s)] = std::move(values);
}

std::vector<double> TabularQ::action_distribution(const AugmentedState& s) const {
  return softmax(action_values(s), probe_temperature);
}

ActionId TabularQ::greedy_action(const AugmentedState& s) const { return ActionId{argmax(action_values(s))}; }

ActionId TabularQ::select_action(const AugmentedState& s, Rng& rng) {
  const double eps = exploration_.at(selections_++);
  return epsilon_greedy(action_values(s), eps, rng);
}

double TabularQ::q_update(const Transition& tr) {
  const auto key = augmented_key(tr.from);
  auto& q = values_.try_emplace(key, num_actions_, initial_value_).first->second;
  auto& n = visits_.try_emplace(key, num_actions_, 0).first->second;
  const std::size_t a = tr.action.index;
  double target = tr.reward;
  if (!tr.done) {
    const auto next = action_values(tr.to);
    target += discount_ * *std::max_element(next.begin(), next.end());
  }
  const double delta = target - q[a];
  q[a] += step_.at(n[a]++) * delta;
  return delta;
}

// --- LinearQ ---------------------------------------------------------------

LinearQ::LinearQ(std::size_t num_states, std::size_t num_actions, std::size_t embed_dim, double discount,
                 StepSize step, Exploration exploration)
    : Policy(num_actions),
      num_states_(num_states),
      embed_dim_(embed_dim),
      discount_(discount),
      step_(step),
      exploration_(exploration),
      w_(num_states * num_actions, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(embed_dim + 1))),
      visits_(num_states * num_actions, 0) {
  step_.validate();
  exploration_.validate();
  if (num_states == 0) throw std::invalid_argument("linear_q needs >= 1 state");
  if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
}

void LinearQ::set_initial_value(double v) {
  for (auto& w : w_) w(0) = v;
}

Eigen::VectorXd LinearQ::features(const ContextSummary& summary) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(embed_dim_ + 1));
  x(0) = 1.0;
  const auto e = embed_summary(summary, embed_dim_);
  for (std::size_t i = 0; i < embed_dim_; ++i) x(static_cast<Eigen::Index>(i + 1)) = e.values[i];
  return x;
}

std::vector<double> LinearQ::values_from_embedding(std::size_t state, const Eigen::VectorXd& embed) const {
  if (state >= num_states_) throw std::out_of_range("linear_q: state out of range");
  if (static_cast<std::size_t>(embed.size()) != embed_dim_) throw std::invalid_argument("linear_q: bad embedding size");
  std::vector<double> q(num_actions_);
  for (std::size_t a = 0; a < num_actions_; ++a) {
    const auto& w = w_[state * num_actions_ + a];
    q[a] = w(0) + w.tail(static_cast<Eigen::Index>(embed_dim_)).dot(embed);
  }
  return q;
}

std::vector<double> LinearQ::action_values(const AugmentedState& s) const {
  return values_from_embedding(s.state.index, features(s.summary).tail(static_cast<Eigen::Index>(embed_dim_)));
}

Eigen::VectorXd& LinearQ::weights(std::size_t state, std::size_t action) {
  return w_.at(state * num_actions_ + action);
}

std::vector<double> LinearQ::action_distribution(const AugmentedState& s) const {
  return softmax(action_values(s), probe_temperature);
}

ActionId LinearQ::greedy_action(const AugmentedState& s) const { return ActionId{argmax(action_values(s))}; }

ActionId LinearQ::select_action(const AugmentedState& s, Rng& rng) {
  const double eps = exploration_.at(selections_++);
  return epsilon_greedy(action_values(s), eps, rng);
}

double LinearQ::q_update(const Transition& tr) {
  const std::size_t idx = tr.from.state.index * num_actions_ + tr.action.index;
  const Eigen::VectorXd x = features(tr.from.summary);
  double target = tr.reward;
  if (!tr.done) {
    const auto next = action_values(tr.to);
    target += discount_ * *std::max_element(next.begin(), next.end());
  }
  auto& w = w_.at(idx);
  const double delta = target - w.dot(x);
  w += step_.at(visits_[idx]++) * delta * x / x.squaredNorm();
  return delta;
}

// --- SoftmaxPolicy ---------------------------------------------------------

SoftmaxPolicy::SoftmaxPolicy(std::size_t num_actions, double temperature, double learning_rate, double discount)
    : Policy(num_actions), temperature_(temperature), learning_rate_(learning_rate), discount_(discount) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax temperature must be > 0");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(discount >= 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must lie in [0, 1]");
}

std::vector<double> SoftmaxPolicy::logits(const AugmentedState& s) const {
  auto it = logits_.find(augmented_key(s));
  if (it == logits_.end()) return std::vector<double>(num_actions_, 0.0);
  return it->second;
}

void SoftmaxPolicy::set_logits(const AugmentedState& s, std::vector<double> values) {
  if (values.size() != num_actions_) throw std::invalid_argument("set_logits: wrong action count");
  logits_[augmented_key(s)] = std::move(values);
}

double SoftmaxPolicy::baseline(const AugmentedState& s) const {
  auto it = baseline_.find(augmented_key(s));
  return it == baseline_.end() ? 0.0 : it->second.first;
}

std::vector<double> SoftmaxPolicy::action_distribution(const AugmentedState& s) const {
  return softmax(logits(s), temperature_);
}

ActionId SoftmaxPolicy::greedy_action(const AugmentedState& s) const { return ActionId{argmax(logits(s))}; }

ActionId SoftmaxPolicy::select_action(const AugmentedState& s, Rng& rng) {
  return ActionId{sample_index(action_distribution(s), rng)};
}

std::vector<double> SoftmaxPolicy::log_policy_gradient(const AugmentedState& s, ActionId a) const {
  auto g = action_distribution(s);
  for (auto& v : g) v = -v / temperature_;
  g.at(a.index) += 1.0 / temperature_;
  return g;
}

void SoftmaxPolicy::reinforce_update(const std::vector<Transition>& episode) {
  std::vector<double> returns(episode.size());
  double g = 0.0;
  for (std::size_t i = episode.size(); i-- > 0;) {
    g = episode[i].reward + discount_ * g;
    returns[i] = g;
  }
  for (std::size_t i = 0; i < episode.size(); ++i) {
    const auto& tr = episode[i];
    const auto key = augmented_key(tr.from);
    const double advantage = returns[i] - baseline(tr.from);
    if (advantage != 0.0) {
      const auto grad = log_policy_gradient(tr.from, tr.action);
      auto& l = logits_.try_emplace(key, num_actions_, 0.0).first->second;
      for (std::size_t a = 0; a < num_actions_; ++a) l[a] += learning_rate_ * grad[a] * advantage;
    }
    auto& [mean, count] = baseline_[key];
    ++count;
    mean += (returns[i] - mean) / static_cast<double>(count);
  }
}

// --- UniformRandom ---------------------------------------------------------

std::vector<double> UniformRandom::action_distribution(const AugmentedState&) const {
  return std::vector<double>(num_actions_, 1.0 / static_cast<double>(num_actions_));
}

ActionId UniformRandom::select_action(const AugmentedState&, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, num_actions_ - 1);
  return ActionId{pick(rng)};
}

// --- Meta-policy -----------------------------------------------------------

void MetaPolicy::validate() const {
  if (!std::isfinite(thresholds.entropy_high) || !std::isfinite(thresholds.latency_high)) {
    throw std::invalid_argument("meta thresholds must be finite");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("meta epsilon must lie in [0, 1]");
}

MetaAction meta_heuristic(const MetaThresholds& thresholds, const BudgetSignals& signals) {
  if (signals.recent_latency_ms > thresholds.latency_high || signals.entropy_nats > thresholds.entropy_high) {
    return MetaAction::Compress;
  }
  if (signals.summary_age >= thresholds.age_max) return MetaAction::Refresh;
  return MetaAction::Keep;
}

MetaAction meta_select(const MetaPolicy& meta, const BudgetSignals& signals, Rng& rng) {
  if (meta.mode == MetaPolicy::Mode::EpsilonGreedy && meta.epsilon > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < meta.epsilon) {
      std::uniform_int_distribution<int> pick(0, 2);
      return static_cast<MetaAction>(pick(rng));
    }
  }
  return meta_heuristic(meta.thresholds, signals);
}

// --- Scheduler -------------------------------------------------------------

UpdateScheduler::UpdateScheduler(UpdateMode mode) : mode_(mode) {
  BudgetSpec probe;
  probe.update_mode = mode_;
  probe.validate();
}

bool UpdateScheduler::decide(std::uint64_t t) const {
  return std::visit(overloaded{[](const PerStep&) { return true; },
                               [t](const Periodic& p) { return t % static_cast<std::uint64_t>(p.period) == 0; },
                               [&](const SlidingWindow& w) {
                                 return !last_refresh_ || t >= *last_refresh_ + static_cast<std::uint64_t>(w.window);
                               }},
                    mode_);
}

void UpdateScheduler::on_refresh(std::uint64_t t) { last_refresh_ = t; }

std::vector<std::uint64_t> predicted_refresh_steps(const UpdateMode& mode, std::uint64_t steps) {
  UpdateScheduler s(mode);
  std::vector<std::uint64_t> out;
  for (std::uint64_t t = 0; t < steps; ++t) {
    if (s.decide(t)) {
      out.push_back(t);
      s.on_refresh(t);
    }
  }
  return out;
}

}  // namespace ctxmdp
