// Regret, stability, efficiency and the scaling and regression diagnostics.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctxmdp/agent.hpp"
#include "ctxmdp/core.hpp"
#include "ctxmdp/costmodel.hpp"

namespace ctxmdp {

struct RegretTracker {
  double cumulative = 0.0;
  std::vector<double> per_step;
};

// Appends max(0, v_star - v_pi); differences above -1e-12 are rounding and clamp to 0.
void regret_update(RegretTracker& tracker, double v_star, double v_pi);

// Max over catalog tokens of ||h(s~) - h(s~ + token)||_2, where h is the
// policy's action distribution. At the cap the injected token displaces the
// last summary token.
double stability_probe(const Policy& policy, const AugmentedState& s, std::span<const Token> catalog,
                       std::int64_t token_cap);

// perf_gain / tokens_used, absent when no tokens were used.
std::optional<double> context_efficiency(double perf_gain, double tokens_used);

// ((perf_hi - perf_lo) / perf_lo) / ((tok_hi - tok_lo) / tok_lo).
double token_elasticity(double perf_lo, double perf_hi, double tok_lo, double tok_hi);

// Least-squares slope of ln R(t) against ln t over t > burn_in (t is 1-based),
// skipping nonpositive values. Throws Unfittable below 10 usable points.
double sqrt_scaling_slope(std::span<const double> cumulative_regret, std::size_t burn_in);

struct FactorRecord {
  double perf = 0.0;
  double cap = 0.0;
  double tok = 0.0;
  double upd = 0.0;
};

class RankDeficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CrossFactorFit {
  // beta0, beta_cap, beta_tok, beta_upd, beta_cap_tok
  Eigen::Matrix<double, 5, 1> beta;
  double p_value = 1.0;
  std::size_t permutations = 0;
  Eigen::VectorXd residuals;
};

// Design row [1, cap, tok, upd, cap * tok].
Eigen::MatrixXd cross_factor_design(std::span<const FactorRecord> records);

// OLS via normal equations plus a Freedman-Lane permutation test on
// |beta_cap_tok| (p = (1 + #{|b*| >= |b|}) / (1 + N)).
CrossFactorFit cross_factor_fit(std::span<const FactorRecord> records, std::size_t permutations, Rng& rng);

}  // namespace ctxmdp
