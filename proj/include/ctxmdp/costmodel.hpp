// Latency accounting: the deterministic synthetic cost model, the power-law
// latency-entropy fit and budget hinge penalties.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "ctxmdp/core.hpp"

namespace ctxmdp {

enum class LatencySource { Measured, Synthetic };

std::string_view to_string(LatencySource source);

struct LatencySample {
  double entropy_nats = 0.0;
  double latency_ms = 0.0;
  std::int64_t tokens = 0;
  LatencySource source = LatencySource::Synthetic;
};

// c0 + c1 * tokens. Throws std::invalid_argument on negative inputs.
double synth_latency(std::int64_t tokens, double c0, double c1);

// Synthetic cost of one step. The summarizer term is paid only when a
// summary is (re)computed; entropy_coeff * H^entropy_exponent models the
// decoding overhead of a more varied context stream.
struct CostModel {
  double c0 = 5.0;
  double c1 = 0.5;
  double entropy_coeff = 0.0;
  double entropy_exponent = 1.2;
  double summarizer_ms = 0.0;

  void validate() const;
  double step_latency(std::int64_t tokens, double entropy_nats, bool refreshed) const;
};

struct PowerLawFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double alpha = 1.0;
  double r_squared = 0.0;
  double rss = 0.0;
};

struct AlphaGrid {
  double lo = 0.5;
  double hi = 2.0;
  std::size_t points = 151;

  double spacing() const { return points > 1 ? (hi - lo) / static_cast<double>(points - 1) : 0.0; }
};

class Unfittable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Latency = beta0 + beta1 * H^alpha: linear least squares for (beta0, beta1)
// at each grid alpha, keeping the smallest residual (smaller alpha on ties).
PowerLawFit fit_power_law(std::span<const LatencySample> samples, const AlphaGrid& grid = {});

struct HingePenalties {
  double latency = 0.0;
  double tokens = 0.0;
  double total() const { return latency + tokens; }
};

// mu * [latency - B]+ and nu * [tokens - T]+.
HingePenalties hinge_penalties(double latency_ms, std::int64_t tokens, const BudgetSpec& budget);

}  // namespace ctxmdp
