#pragma once

// Relevance-signal normalization and iterated maximum-subarray span
// extraction over dialogue turn scores.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dycp {

/// Standard deviations at or below this are treated as zero.
inline constexpr double kStdEpsilon = 1e-12;

/// A gain value; std::nullopt marks a position already claimed by a span.
using Gain = std::optional<double>;

struct ScoreSequence {
  std::vector<double> raw;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> z;
  std::vector<Gain> gains;  // empty until gains_from() runs

  std::size_t size() const noexcept { return raw.size(); }
};

/// Inclusive 1-based interval of turns together with its cumulative gain.
struct Span {
  std::size_t start = 1;
  std::size_t end = 1;
  double gain = 0.0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool contains(std::size_t turn) const noexcept { return turn >= start && turn <= end; }
  bool operator==(const Span&) const = default;
};

struct PruneConfig {
  double tau = 0.6;
  double theta = 1.0;
  std::optional<std::size_t> max_spans;  // nullopt = no cap

  /// Throws std::invalid_argument when max_spans is 0 or a threshold is NaN.
  void validate() const;
};

class SpanSet {
 public:
  SpanSet() = default;
  explicit SpanSet(std::vector<Span> extraction_order);

  /// Spans in the order they were extracted (gain non-increasing for KadaneDial).
  const std::vector<Span>& spans() const noexcept { return spans_; }
  /// Spans sorted by start index.
  std::vector<Span> chronological() const;
  /// Sorted union of all turn indices covered by the spans.
  std::vector<std::size_t> turn_indices() const;
  std::size_t total_turns() const noexcept;

  std::size_t size() const noexcept { return spans_.size(); }
  bool empty() const noexcept { return spans_.empty(); }
  const Span& operator[](std::size_t i) const { return spans_[i]; }

  bool operator==(const SpanSet&) const = default;

 private:
  std::vector<Span> spans_;
};

/// Population z-scores. When the deviation is at or below kStdEpsilon every z is 0.
ScoreSequence zscore_normalize(std::span<const double> raw);

/// Returns a copy of `seq` with gains_i = z_i - tau, none masked.
ScoreSequence gains_from(ScoreSequence seq, double tau);

/// Kadane scan over `gains` using the update rule
///   m <- (m + g_j > g_j) ? m + g_j : g_j   (restart at j otherwise)
///   best <- (m > best) ? (start, j, m) : best
/// Masked entries break any running span and are never included.
/// Returns nullopt when there is no unmasked entry.
std::optional<Span> max_subarray(std::span<const Gain> gains);

/// Normalizes `scores`, applies the gain shift and repeatedly extracts the
/// best remaining span while the previously extracted gain is >= theta.
/// The first span is extracted unconditionally for non-empty input.
///
/// Every extraction leaves disjoint unmasked stretches whose best spans
/// are independent, so only the stretches split by the last span are
/// rescanned. The result is identical to rescanning the whole sequence
/// each iteration.
///
/// Throws std::invalid_argument on non-finite scores or an invalid config.
SpanSet kadane_dial(std::span<const double> scores, const PruneConfig& config);

/// Same extraction loop over gains that were already computed.
SpanSet extract_spans(std::span<const double> gains, const PruneConfig& config);

}  // namespace dycp
