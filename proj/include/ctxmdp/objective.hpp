// The budgeted Lagrangian, the sufficiency gap, the sensitivity regularizer
// and the joint training loss.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctxmdp/agent.hpp"
#include "ctxmdp/core.hpp"
#include "ctxmdp/envs.hpp"

namespace ctxmdp {

struct LossWeights {
  double eta1 = 1.0;   // -I
  double eta2 = 5e-3;  // H
  double eta3 = 1e-3;  // sensitivity excess
  double eta4 = 1.0;   // budget hinges
  double eta5 = 1e-2;  // sufficiency gap
  double warmup_fraction = 0.10;
  double lipschitz_q = 10.0;
  double lipschitz_pi = 10.0;

  void validate() const;
};

struct ObjectiveComponents {
  double mi_estimate = 0.0;
  double entropy_nats = 0.0;
  double latency_ms = 0.0;
  std::int64_t tokens = 0;
  double epsilon_hat = 0.0;
  double sensitivity_q = 0.0;
  double sensitivity_pi = 0.0;
};

// -I + lambda H + mu [latency - B]+ + nu [tokens - T]+.
double lagrangian(const ObjectiveComponents& c, const BudgetSpec& budget);

inline constexpr double kSufficiencySmoothing = 1e-8;

// Weighted mean over states of KL(pi_full(.|s) || pi_summary(.|s)). Rows
// holding a zero probability get delta added to every entry and are renormalized.
double sufficiency_epsilon(const ActionDistributions& pi_full, const ActionDistributions& pi_summary,
                           std::span<const double> state_weights, double delta = kSufficiencySmoothing);

// Alternative route to the sufficiency gap (e.g. a learned discriminator).
class SufficiencyEstimator {
 public:
  virtual ~SufficiencyEstimator() = default;
  virtual double estimate(const ActionDistributions& pi_full, const ActionDistributions& pi_summary,
                          std::span<const double> state_weights) const = 0;
};

class ExactSufficiency final : public SufficiencyEstimator {
 public:
  double estimate(const ActionDistributions& pi_full, const ActionDistributions& pi_summary,
                  std::span<const double> state_weights) const override {
    return sufficiency_epsilon(pi_full, pi_summary, state_weights);
  }
};

struct SensitivityNorms {
  double q = 0.0;
  double pi = 0.0;
};

// Functions of the summary embedding at a fixed base state.
using EmbeddingMap = std::function<std::vector<double>(const Eigen::VectorXd&)>;

// Central differences over every embedding coordinate. For each coordinate
// the quotient is taken on Q(., a) and log pi(a|.) of `action`; the result
// is the Euclidean norm of each quotient vector.
SensitivityNorms sensitivity_norms(const EmbeddingMap& q_values, const EmbeddingMap& log_pi,
                                   const Eigen::VectorXd& embedding, std::size_t action, double h);

// Same, for a linear Q-learner and its Boltzmann probe distribution.
SensitivityNorms sensitivity_norms(const LinearQ& policy, const AugmentedState& s, double h);

// max(0, norm - L) for each bound.
SensitivityNorms sensitivity_excess(const SensitivityNorms& norms, const LossWeights& weights);

// Linear ramp from 0 at progress 0 to 1 at warmup_fraction.
double warmup_weight(double progress, double warmup_fraction);

double joint_loss(double rl_loss, const ObjectiveComponents& c, const LossWeights& weights,
                  const BudgetSpec& budget, double progress);

}  // namespace ctxmdp
