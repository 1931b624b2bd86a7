#pragma once

// Query-time context selection: score the history, pick turns, and render
// the surviving turns in chronological order as prompt context.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dycp/dialogue_store.hpp"
#include "dycp/embedding.hpp"
#include "dycp/kadane.hpp"
#include "dycp/scoring.hpp"

namespace dycp {

class TokenEstimator {
 public:
  virtual ~TokenEstimator() = default;
  virtual std::size_t count(std::string_view text) const = 0;
};

/// ceil(code points / 4).
class CharHeuristicEstimator final : public TokenEstimator {
 public:
  std::size_t count(std::string_view text) const override;
};

std::size_t estimate_tokens(std::string_view text);

struct SegmentStats {
  std::size_t retrieved_segments = 0;  // RS
  double turns_per_segment = 0.0;      // TpS
  std::size_t turns_total = 0;

  bool operator==(const SegmentStats&) const = default;
};

SegmentStats segment_stats(const SpanSet& spans);

struct PrunedSelection {
  SpanSet spans;
  std::vector<std::size_t> turn_indices;  // strictly increasing
  std::string rendered_context;
  SegmentStats stats;
  std::size_t token_full = 0;
  std::size_t token_pruned = 0;
  /// The method's own preference order over turn_indices, used for @k metrics.
  std::vector<std::size_t> ranking;

  bool operator==(const PrunedSelection&) const = default;
};

struct MethodSpec {
  enum class Kind { kDycp, kFull, kNone, kTopK };

  Kind kind = Kind::kDycp;
  std::size_t k = 0;  // kTopK only; 0 means "match the DyCP budget"
  PruneConfig config;

  /// Accepts "dycp", "full", "none", "topk:<k>" and "topk:auto".
  static MethodSpec parse(std::string_view text);
  std::string label() const;
  bool auto_budget() const noexcept { return kind == Kind::kTopK && k == 0; }
};

struct PruneOptions {
  Similarity similarity = Similarity::kDot;
  const TokenEstimator* estimator = nullptr;  // nullptr = CharHeuristicEstimator
};

/// Selected turns as "User: ...\nAgent: ..." blocks joined by a blank line;
/// a line holding "…" separates turns that are not adjacent in the history.
std::string render_context(const DialogueHistory& history,
                           std::span<const std::size_t> turn_indices);

/// Embeds the query, scores the history and runs KadaneDial.
PrunedSelection prune(const DialogueHistory& history, const std::string& query,
                      const EmbeddingProvider& provider, const PruneConfig& config,
                      const PruneOptions& options = {});

/// As prune() with the per-turn scores already computed.
PrunedSelection prune_scored(const DialogueHistory& history, std::span<const double> scores,
                             const PruneConfig& config, const PruneOptions& options = {});

/// Full, none and fixed top-k selections (dycp is forwarded to prune()).
/// Throws std::invalid_argument for topk with k == 0.
PrunedSelection select_baseline(const DialogueHistory& history, const std::string& query,
                                const EmbeddingProvider& provider, const MethodSpec& method,
                                const PruneOptions& options = {});

PrunedSelection select_scored(const DialogueHistory& history, std::span<const double> scores,
                              const MethodSpec& method, const PruneOptions& options = {});

/// Removes the `bottom` lowest-scoring turns from every span of
/// `selection` independently (equal scores: the later turn goes first). A
/// span never loses its highest-scoring turn. Surviving turns are regrouped
/// into contiguous runs whose gain is the sum of `scores` over the run.
PrunedSelection ablate_bottom(const DialogueHistory& history, const PrunedSelection& selection,
                              std::span<const double> scores, std::size_t bottom,
                              const PruneOptions& options = {});

}  // namespace dycp
