#include "ctxmdp/objective.hpp"

#include <algorithm>
#include <cmath>

#include "ctxmdp/costmodel.hpp"
#include "ctxmdp/numeric.hpp"

namespace ctxmdp {

void LossWeights::validate() const {
  for (double v : {eta1, eta2, eta3, eta4, eta5, lipschitz_q, lipschitz_pi}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
  }
}

double lagrangian(const ObjectiveComponents& c, const BudgetSpec& budget) {
  const auto hinge = hinge_penalties(c.latency_ms, c.tokens, budget);
  return -c.mi_estimate + budget.lambda * c.entropy_nats + hinge.total();
}

double sufficiency_epsilon(const ActionDistributions& pi_full, const ActionDistributions& pi_summary,
                           std::span<const double> state_weights, double delta) {
  if (pi_full.size() != pi_summary.size() || pi_full.size() != state_weights.size()) {
    throw std::invalid_argument("sufficiency_epsilon: state counts differ");
  }
  double total_weight = 0.0;
  for (double w : state_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("sufficiency_epsilon: weights must be >= 0");
    total_weight += w;
  }
  if (!(total_weight > 0.0)) throw std::invalid_argument("sufficiency_epsilon: weights sum to 0");
  double eps = 0.0;
  for (std::size_t s = 0; s < pi_full.size(); ++s) {
    const auto& p = pi_full[s];
    const auto& q = pi_summary[s];
    if (p.size() != q.size()) throw std::invalid_argument("sufficiency_epsilon: action counts differ");
    if (state_weights[s] == 0.0) continue;
    // Smoothing only touches rows with a zero probability, where KL would blow up.
    const bool guard = std::any_of(p.begin(), p.end(), [](double v) { return v <= 0.0; }) ||
                       std::any_of(q.begin(), q.end(), [](double v) { return v <= 0.0; });
    const double d = guard ? delta : 0.0;
    const double zp = 1.0 + d * static_cast<double>(p.size());
    const double zq = 1.0 + d * static_cast<double>(q.size());
    double kl = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      const double ps = (p[a] + d) / zp;
      const double qs = (q[a] + d) / zq;
      if (ps > 0.0) kl += ps * std::log(ps / qs);
    }
    eps += state_weights[s] * std::max(0.0, kl);
  }
  return eps / total_weight;
}

SensitivityNorms sensitivity_norms(const EmbeddingMap& q_values, const EmbeddingMap& log_pi,
                                   const Eigen::VectorXd& embedding, std::size_t action, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("sensitivity_norms: probe scale must be > 0");
  double q2 = 0.0, pi2 = 0.0;
  Eigen::VectorXd up = embedding, down = embedding;
  for (Eigen::Index i = 0; i < embedding.size(); ++i) {
    up(i) += h;
    down(i) -= h;
    const double dq = (q_values(up).at(action) - q_values(down).at(action)) / (2.0 * h);
    const double dpi = (log_pi(up).at(action) - log_pi(down).at(action)) / (2.0 * h);
    q2 += dq * dq;
    pi2 += dpi * dpi;
    up(i) = down(i) = embedding(i);
  }
  return SensitivityNorms{std::sqrt(q2), std::sqrt(pi2)};
}

SensitivityNorms sensitivity_norms(const LinearQ& policy, const AugmentedState& s, double h) {
  const Eigen::VectorXd x = policy.features(s.summary).tail(static_cast<Eigen::Index>(policy.embed_dim()));
  const std::size_t state = s.state.index;
  EmbeddingMap q = [&](const Eigen::VectorXd& e) { return policy.values_from_embedding(state, e); };
  EmbeddingMap log_pi = [&](const Eigen::VectorXd& e) {
    const auto values = policy.values_from_embedding(state, e);
    std::vector<double> scaled(values.size());
    for (std::size_t a = 0; a < values.size(); ++a) scaled[a] = values[a] / policy.probe_temperature;
    const double z = log_sum_exp(scaled);
    for (auto& v : scaled) v -= z;
    return scaled;
  };
  return sensitivity_norms(q, log_pi, x, policy.greedy_action(s).index, h);
}

SensitivityNorms sensitivity_excess(const SensitivityNorms& norms, const LossWeights& weights) {
  return SensitivityNorms{std::max(0.0, norms.q - weights.lipschitz_q), std::max(0.0, norms.pi - weights.lipschitz_pi)};
}

double warmup_weight(double progress, double warmup_fraction) {
  if (warmup_fraction <= 0.0) return 1.0;
  return std::clamp(progress / warmup_fraction, 0.0, 1.0);
}

double joint_loss(double rl_loss, const ObjectiveComponents& c, const LossWeights& weights,
                  const BudgetSpec& budget, double progress) {
  const auto hinge = hinge_penalties(c.latency_ms, c.tokens, budget);
  const auto excess = sensitivity_excess(SensitivityNorms{c.sensitivity_q, c.sensitivity_pi}, weights);
  const double aux = weights.eta1 * (-c.mi_estimate) + weights.eta2 * c.entropy_nats +
                     weights.eta3 * (excess.q + excess.pi) + weights.eta4 * hinge.total() +
                     weights.eta5 * c.epsilon_hat;
  return rl_loss + warmup_weight(progress, weights.warmup_fraction) * aux;
}

}  // namespace ctxmdp
