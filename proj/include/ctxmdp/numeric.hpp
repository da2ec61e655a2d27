// Small numerically careful helpers used across modules.
#pragma once

#include <span>
#include <vector>

namespace ctxmdp {

// log(sum(exp(x))) with max-shift; -inf for an empty span.
double log_sum_exp(std::span<const double> values);

// softmax(values / temperature) with max-shift. temperature must be > 0.
std::vector<double> softmax(std::span<const double> values, double temperature = 1.0);

// Index of the maximum, lowest index on ties.
std::size_t argmax(std::span<const double> values);

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation; NaN when either input has zero rank variance.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ctxmdp
