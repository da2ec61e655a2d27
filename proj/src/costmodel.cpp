#include "ctxmdp/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace ctxmdp {

std::string_view to_string(LatencySource source) {
  return source == LatencySource::Measured ? "measured" : "synthetic";
}

double synth_latency(std::int64_t tokens, double c0, double c1) {
  if (tokens < 0) throw std::invalid_argument("synth_latency: tokens must be >= 0");
  if (c0 < 0.0 || c1 < 0.0) throw std::invalid_argument("synth_latency: costs must be >= 0");
  return c0 + c1 * static_cast<double>(tokens);
}

void CostModel::validate() const {
  if (!(c0 >= 0.0) || !(c1 >= 0.0)) throw std::invalid_argument("cost model: c0 and c1 must be >= 0");
  if (!(entropy_coeff >= 0.0)) throw std::invalid_argument("cost model: entropy_coeff must be >= 0");
  if (!(entropy_exponent > 0.0)) throw std::invalid_argument("cost model: entropy_exponent must be > 0");
  if (!(summarizer_ms >= 0.0)) throw std::invalid_argument("cost model: summarizer_ms must be >= 0");
}

double CostModel::step_latency(std::int64_t tokens, double entropy_nats, bool refreshed) const {
  double ms = synth_latency(tokens, c0, c1);
  if (entropy_coeff > 0.0 && entropy_nats > 0.0) ms += entropy_coeff * std::pow(entropy_nats, entropy_exponent);
  if (refreshed) ms += summarizer_ms;
  return ms;
}

PowerLawFit fit_power_law(std::span<const LatencySample> samples, const AlphaGrid& grid) {
  if (samples.size() < 3) throw Unfittable("power-law fit needs >= 3 samples");
  if (!(grid.lo > 0.0) || grid.hi < grid.lo || grid.points == 0) {
    throw std::invalid_argument("power-law fit: need 0 < lo <= hi and >= 1 grid point");
  }
  std::set<double> distinct;
  for (const auto& s : samples) {
    if (!std::isfinite(s.entropy_nats) || !std::isfinite(s.latency_ms) || s.entropy_nats < 0.0) {
      throw std::invalid_argument("power-law fit: samples must be finite with entropy >= 0");
    }
    distinct.insert(s.entropy_nats);
  }
  if (distinct.size() < 2) throw Unfittable("power-law fit: all entropy values are equal");

  const double n = static_cast<double>(samples.size());
  double y_mean = 0.0;
  for (const auto& s : samples) y_mean += s.latency_ms;
  y_mean /= n;
  double tss = 0.0;
  for (const auto& s : samples) tss += (s.latency_ms - y_mean) * (s.latency_ms - y_mean);

  PowerLawFit best;
  best.rss = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.points; ++g) {
    const double alpha = grid.points == 1 ? grid.lo : grid.lo + grid.spacing() * static_cast<double>(g);
    double x_mean = 0.0;
    for (const auto& s : samples) x_mean += std::pow(s.entropy_nats, alpha);
    x_mean /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& s : samples) {
      const double dx = std::pow(s.entropy_nats, alpha) - x_mean;
      sxx += dx * dx;
      sxy += dx * (s.latency_ms - y_mean);
    }
    const double beta1 = sxx > 0.0 ? sxy / sxx : 0.0;
    const double beta0 = y_mean - beta1 * x_mean;
    double rss = 0.0;
    for (const auto& s : samples) {
      const double r = s.latency_ms - beta0 - beta1 * std::pow(s.entropy_nats, alpha);
      rss += r * r;
    }
    // Relative slack so rounding noise does not pick a larger alpha over an exact tie.
    if (rss < best.rss - 1e-12 * std::max(1.0, tss)) {
      best = PowerLawFit{beta0, beta1, alpha, 0.0, rss};
    }
  }
  best.r_squared = tss > 0.0 ? 1.0 - best.rss / tss : (best.rss <= 1e-24 ? 1.0 : 0.0);
  return best;
}

HingePenalties hinge_penalties(double latency_ms, std::int64_t tokens, const BudgetSpec& budget) {
  budget.validate();
  return HingePenalties{budget.mu * std::max(0.0, latency_ms - budget.latency_cap_ms),
                        budget.nu * std::max(0.0, static_cast<double>(tokens - budget.token_cap))};
}

}  // namespace ctxmdp
