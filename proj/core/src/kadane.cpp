#include "dycp/kadane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace dycp {

void PruneConfig::validate() const {
  if (std::isnan(tau) || std::isnan(theta)) {
    throw std::invalid_argument("PruneConfig: tau and theta must not be NaN");
  }
  if (max_spans && *max_spans == 0) {
    throw std::invalid_argument("PruneConfig: max_spans must be >= 1");
  }
}

SpanSet::SpanSet(std::vector<Span> extraction_order) : spans_(std::move(extraction_order)) {}

std::vector<Span> SpanSet::chronological() const {
  std::vector<Span> out = spans_;
  std::sort(out.begin(), out.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });
  return out;
}

std::vector<std::size_t> SpanSet::turn_indices() const {
  std::vector<std::size_t> out;
  out.reserve(total_turns());
  for (const Span& s : chronological()) {
    for (std::size_t t = s.start; t <= s.end; ++t) out.push_back(t);
  }
  return out;
}

std::size_t SpanSet::total_turns() const noexcept {
  std::size_t n = 0;
  for (const Span& s : spans_) n += s.length();
  return n;
}

ScoreSequence zscore_normalize(std::span<const double> raw) {
  ScoreSequence seq;
  seq.raw.assign(raw.begin(), raw.end());
  seq.z.assign(raw.size(), 0.0);
  if (raw.empty()) return seq;

  const auto n = static_cast<double>(raw.size());
  double sum = 0.0;
  for (double s : raw) sum += s;
  seq.mean = sum / n;

  double sq = 0.0;
  for (double s : raw) {
    const double d = s - seq.mean;
    sq += d * d;
  }
  seq.std = std::sqrt(sq / n);

  if (seq.std > kStdEpsilon) {
    for (std::size_t i = 0; i < raw.size(); ++i) seq.z[i] = (raw[i] - seq.mean) / seq.std;
  }
  return seq;
}

ScoreSequence gains_from(ScoreSequence seq, double tau) {
  seq.gains.resize(seq.z.size());
  for (std::size_t i = 0; i < seq.z.size(); ++i) seq.gains[i] = seq.z[i] - tau;
  return seq;
}

namespace {

// Kadane scan over gains[lo, hi) where every entry is unmasked. Indices in
// the returned span are 1-based positions in the full sequence.
std::optional<Span> scan_range(std::span<const double> gains, std::size_t lo, std::size_t hi) {
  std::optional<Span> best;
  double m = 0.0;
  std::size_t run_start = lo;
  for (std::size_t j = lo; j < hi; ++j) {
    const double g = gains[j];
    if (j != lo && m + g > g) {
      m += g;
    } else {
      m = g;
      run_start = j;
    }
    if (!best || m > best->gain) best = Span{run_start + 1, j + 1, m};
  }
  return best;
}

struct Stretch {
  std::size_t lo;  // 0-based, half-open [lo, hi)
  std::size_t hi;
  Span best;
};

// Highest gain first; among equal gains the stretch that comes first in
// the sequence wins, as a full left-to-right scan with strict '>' would.
struct StretchOrder {
  bool operator()(const Stretch& a, const Stretch& b) const {
    if (a.best.gain != b.best.gain) return a.best.gain < b.best.gain;
    return a.lo > b.lo;
  }
};

}  // namespace

std::optional<Span> max_subarray(std::span<const Gain> gains) {
  std::optional<Span> best;
  bool running = false;
  double m = 0.0;
  std::size_t run_start = 0;
  for (std::size_t j = 0; j < gains.size(); ++j) {
    if (!gains[j]) {
      running = false;
      continue;
    }
    const double g = *gains[j];
    if (running && m + g > g) {
      m += g;
    } else {
      m = g;
      run_start = j;
    }
    running = true;
    if (!best || m > best->gain) best = Span{run_start + 1, j + 1, m};
  }
  return best;
}

SpanSet extract_spans(std::span<const double> gains, const PruneConfig& config) {
  config.validate();
  std::vector<Span> found;
  if (gains.empty()) return SpanSet{};

  std::priority_queue<Stretch, std::vector<Stretch>, StretchOrder> pending;
  auto push_range = [&](std::size_t lo, std::size_t hi) {
    if (lo >= hi) return;
    if (auto best = scan_range(gains, lo, hi)) pending.push(Stretch{lo, hi, *best});
  };
  push_range(0, gains.size());

  const std::size_t cap = config.max_spans.value_or(std::numeric_limits<std::size_t>::max());
  double last_gain = std::numeric_limits<double>::infinity();
  while (last_gain >= config.theta && found.size() < cap && !pending.empty()) {
    Stretch top = pending.top();
    pending.pop();
    found.push_back(top.best);
    last_gain = top.best.gain;
    push_range(top.lo, top.best.start - 1);
    push_range(top.best.end, top.hi);
  }
  return SpanSet{std::move(found)};
}

SpanSet kadane_dial(std::span<const double> scores, const PruneConfig& config) {
  config.validate();
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("kadane_dial: non-finite score");
  }
  const ScoreSequence seq = zscore_normalize(scores);
  std::vector<double> gains(seq.z.size());
  for (std::size_t i = 0; i < gains.size(); ++i) gains[i] = seq.z[i] - config.tau;
  return extract_spans(gains, config);
}

}  // namespace dycp
