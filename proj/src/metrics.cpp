#include "ctxmdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxmdp/costmodel.hpp"

namespace ctxmdp {

void regret_update(RegretTracker& tracker, double v_star, double v_pi) {
  if (!std::isfinite(v_star) || !std::isfinite(v_pi)) throw std::invalid_argument("regret_update: non-finite value");
  const double r = std::max(0.0, v_star - v_pi);
  tracker.per_step.push_back(r);
  tracker.cumulative += r;
}

double stability_probe(const Policy& policy, const AugmentedState& s, std::span<const Token> catalog,
                       std::int64_t token_cap) {
  if (catalog.empty()) throw std::invalid_argument("stability_probe: catalog is empty");
  if (token_cap < 1) throw std::invalid_argument("stability_probe: token cap must be >= 1");
  const auto base = policy.action_distribution(s);
  const auto cap = static_cast<std::size_t>(token_cap);
  double worst = 0.0;
  for (const Token& t : catalog) {
    AugmentedState probe = s;
    auto& tokens = probe.summary.tokens;
    if (tokens.size() > cap) tokens.resize(cap);
    if (tokens.size() == cap) tokens.back() = t;
    else tokens.push_back(t);
    const auto moved = policy.action_distribution(probe);
    double d2 = 0.0;
    for (std::size_t a = 0; a < base.size(); ++a) d2 += (moved[a] - base[a]) * (moved[a] - base[a]);
    worst = std::max(worst, std::sqrt(d2));
  }
  return worst;
}

std::optional<double> context_efficiency(double perf_gain, double tokens_used) {
  if (!(tokens_used > 0.0)) return std::nullopt;
  return perf_gain / tokens_used;
}

double token_elasticity(double perf_lo, double perf_hi, double tok_lo, double tok_hi) {
  if (!(perf_lo > 0.0)) throw std::invalid_argument("token_elasticity: perf_lo must be > 0");
  if (!(tok_lo > 0.0) || !(tok_hi > tok_lo)) throw std::invalid_argument("token_elasticity: need 0 < tok_lo < tok_hi");
  return ((perf_hi - perf_lo) / perf_lo) / ((tok_hi - tok_lo) / tok_lo);
}

double sqrt_scaling_slope(std::span<const double> cumulative_regret, std::size_t burn_in) {
  std::vector<double> xs, ys;
  for (std::size_t i = burn_in; i < cumulative_regret.size(); ++i) {
    const double r = cumulative_regret[i];
    if (!(r > 0.0) || !std::isfinite(r)) continue;
    xs.push_back(std::log(static_cast<double>(i + 1)));
    ys.push_back(std::log(r));
  }
  if (xs.size() < 10) throw Unfittable("scaling slope needs >= 10 positive points after burn-in");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  return sxy / sxx;
}

Eigen::MatrixXd cross_factor_design(std::span<const FactorRecord> records) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), 5);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    x.row(static_cast<Eigen::Index>(i)) << 1.0, r.cap, r.tok, r.upd, r.cap * r.tok;
  }
  return x;
}

CrossFactorFit cross_factor_fit(std::span<const FactorRecord> records, std::size_t permutations, Rng& rng) {
  if (records.size() < 8) throw std::invalid_argument("cross_factor_fit: need >= 8 records");
  const Eigen::MatrixXd x = cross_factor_design(records);
  Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = records[i].perf;

  // Column scaling keeps the normal matrix well conditioned for the rank check.
  const Eigen::VectorXd scale = x.colwise().norm().transpose().cwiseMax(1e-300);
  const Eigen::MatrixXd xs = x * scale.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd gram = xs.transpose() * xs;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double min_ev = eig.eigenvalues().minCoeff();
  const double max_ev = eig.eigenvalues().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(min_ev > 1e-10 * max_ev)) {
    throw RankDeficient("cross-factor design matrix is rank deficient");
  }
  auto solve = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
    return (ldlt.solve(xs.transpose() * rhs)).cwiseQuotient(scale);
  };

  CrossFactorFit fit;
  Eigen::VectorXd b = solve(y);
  // One step of iterative refinement tightens the normal-equation residual.
  const Eigen::VectorXd r0 = y - x * b;
  b += solve(r0);
  fit.beta = b;
  fit.residuals = y - x * b;

  // Freedman-Lane: permute the residuals of the model without the
  // interaction and add them back to its fitted values.
  const Eigen::MatrixXd xr = x.leftCols(4);
  const Eigen::VectorXd br = xr.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd fitted = xr * br;
  const Eigen::VectorXd reduced = y - fitted;
  const double observed = std::abs(b(4));
  std::vector<double> perm(reduced.data(), reduced.data() + reduced.size());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < permutations; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const Eigen::VectorXd ys = fitted + Eigen::Map<const Eigen::VectorXd>(perm.data(), y.size());
    const Eigen::VectorXd bp = solve(ys);
    if (std::abs(bp(4)) >= observed) ++hits;
  }
  fit.permutations = permutations;
  fit.p_value = static_cast<double>(1 + hits) / static_cast<double>(1 + permutations);
  return fit;
}

}  // namespace ctxmdp
