#pragma once

// Independent reference implementations used only by tests.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "dycp/kadane.hpp"

namespace dycp::testing {

struct BruteStats {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> z;
};

/// Mean/population std via long double accumulation; z = 0 when std <= 1e-12.
BruteStats brute_stats(std::span<const double> raw);

/// Best contiguous span by exhaustive enumeration, skipping masked entries
/// (`masked[i]` true). Ties: earlier start, then earlier end.
std::optional<Span> brute_max_subarray(std::span<const double> gains,
                                       const std::vector<bool>& masked);

/// KadaneDial with brute-force span search each iteration and its own
/// normalization.
SpanSet oracle_kadane_dial(std::span<const double> scores, const PruneConfig& config);

/// KadaneDial rescanning the whole masked gain sequence every iteration
/// with dycp::max_subarray.
SpanSet literal_kadane_dial(std::span<const double> scores, const PruneConfig& config);

/// Random score sequences: Gaussian, uniform, constant or single element.
std::vector<double> random_scores(std::mt19937_64& rng, std::size_t max_len);

/// Ablation by exhaustive filter: a turn in a span survives if fewer than
/// keep(span) turns of the span beat it under (score desc, index asc).
std::vector<std::size_t> brute_ablation(const std::vector<Span>& spans,
                                        std::span<const double> scores, std::size_t bottom);

}  // namespace dycp::testing
