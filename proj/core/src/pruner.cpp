#include "dycp/pruner.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <stdexcept>

namespace dycp {

std::size_t CharHeuristicEstimator::count(std::string_view text) const {
  std::size_t code_points = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0u) != 0x80u) ++code_points;
  }
  return (code_points + 3) / 4;
}

std::size_t estimate_tokens(std::string_view text) { return CharHeuristicEstimator{}.count(text); }

SegmentStats segment_stats(const SpanSet& spans) {
  SegmentStats s;
  s.retrieved_segments = spans.size();
  s.turns_total = spans.total_turns();
  if (s.retrieved_segments > 0) {
    s.turns_per_segment =
        static_cast<double>(s.turns_total) / static_cast<double>(s.retrieved_segments);
  }
  return s;
}

MethodSpec MethodSpec::parse(std::string_view text) {
  MethodSpec m;
  if (text == "dycp") return m;
  if (text == "full") {
    m.kind = Kind::kFull;
    return m;
  }
  if (text == "none") {
    m.kind = Kind::kNone;
    return m;
  }
  if (text.starts_with("topk")) {
    m.kind = Kind::kTopK;
    std::string_view rest = text.substr(4);
    if (rest.empty() || rest == ":auto") return m;
    if (rest.front() == ':') {
      rest.remove_prefix(1);
      std::size_t k = 0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
      if (ec == std::errc{} && ptr == rest.data() + rest.size() && k >= 1) {
        m.k = k;
        return m;
      }
    }
  }
  throw std::invalid_argument("unknown method '" + std::string(text) +
                              "' (expected dycp, full, none, topk:<k> or topk:auto)");
}

std::string MethodSpec::label() const {
  switch (kind) {
    case Kind::kDycp:
      return "dycp";
    case Kind::kFull:
      return "full";
    case Kind::kNone:
      return "none";
    case Kind::kTopK:
      return k == 0 ? "topk-auto" : "topk-" + std::to_string(k);
  }
  return "unknown";
}

std::string render_context(const DialogueHistory& history,
                           std::span<const std::size_t> turn_indices) {
  std::size_t bytes = 0;
  for (std::size_t t : turn_indices) bytes += history.turn(t).encoded_unit.size() + 8;
  std::string out;
  out.reserve(bytes);
  for (std::size_t i = 0; i < turn_indices.size(); ++i) {
    if (i > 0) out.append(turn_indices[i] == turn_indices[i - 1] + 1 ? "\n\n" : "\n\n…\n\n");
    out.append(history.turn(turn_indices[i]).encoded_unit);
  }
  return out;
}

namespace {

const TokenEstimator& estimator_of(const PruneOptions& options) {
  static const CharHeuristicEstimator fallback;
  return options.estimator ? *options.estimator : fallback;
}

std::size_t full_tokens(const DialogueHistory& history, const TokenEstimator& est) {
  std::vector<std::size_t> all(history.size());
  std::iota(all.begin(), all.end(), std::size_t{1});
  return est.count(render_context(history, all));
}

// Fills turn_indices, context, stats and token counts from `spans`.
PrunedSelection assemble(const DialogueHistory& history, SpanSet spans,
                         std::vector<std::size_t> ranking, const PruneOptions& options) {
  const TokenEstimator& est = estimator_of(options);
  PrunedSelection sel;
  sel.turn_indices = spans.turn_indices();
  sel.rendered_context = render_context(history, sel.turn_indices);
  sel.stats = segment_stats(spans);
  sel.token_full = full_tokens(history, est);
  sel.token_pruned = sel.turn_indices.size() == history.size() ? sel.token_full
                                                               : est.count(sel.rendered_context);
  sel.spans = std::move(spans);
  sel.ranking = std::move(ranking);
  return sel;
}

// Maximal runs of consecutive indices in a sorted list.
SpanSet runs_of(std::span<const std::size_t> sorted, std::span<const double> scores) {
  std::vector<Span> runs;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const std::size_t t = sorted[i];
    if (runs.empty() || t != runs.back().end + 1) {
      runs.push_back(Span{t, t, 0.0});
    } else {
      runs.back().end = t;
    }
    runs.back().gain += scores[t - 1];
  }
  return SpanSet{std::move(runs)};
}

// Descending score, earlier index first on ties.
void sort_by_score(std::vector<std::size_t>& turns, std::span<const double> scores) {
  std::stable_sort(turns.begin(), turns.end(), [&](std::size_t a, std::size_t b) {
    return scores[a - 1] > scores[b - 1];
  });
}

void check_scores(const DialogueHistory& history, std::span<const double> scores) {
  if (scores.size() != history.size()) {
    throw std::invalid_argument("score count " + std::to_string(scores.size()) +
                                " does not match history size " +
                                std::to_string(history.size()));
  }
}

}  // namespace

PrunedSelection prune_scored(const DialogueHistory& history, std::span<const double> scores,
                             const PruneConfig& config, const PruneOptions& options) {
  check_scores(history, scores);
  SpanSet spans = kadane_dial(scores, config);

  std::vector<std::size_t> ranking;
  ranking.reserve(spans.total_turns());
  for (const Span& s : spans.spans()) {
    std::vector<std::size_t> within(s.length());
    std::iota(within.begin(), within.end(), s.start);
    sort_by_score(within, scores);
    ranking.insert(ranking.end(), within.begin(), within.end());
  }
  return assemble(history, std::move(spans), std::move(ranking), options);
}

PrunedSelection prune(const DialogueHistory& history, const std::string& query,
                      const EmbeddingProvider& provider, const PruneConfig& config,
                      const PruneOptions& options) {
  config.validate();
  if (history.empty()) return assemble(history, SpanSet{}, {}, options);
  const QueryEmbedding q = embed_query(provider, query);
  const std::vector<double> scores = score_history(history, q, options.similarity);
  return prune_scored(history, scores, config, options);
}

PrunedSelection select_scored(const DialogueHistory& history, std::span<const double> scores,
                              const MethodSpec& method, const PruneOptions& options) {
  const std::size_t n = history.size();
  switch (method.kind) {
    case MethodSpec::Kind::kDycp:
      return prune_scored(history, scores, method.config, options);
    case MethodSpec::Kind::kNone:
      return assemble(history, SpanSet{}, {}, options);
    case MethodSpec::Kind::kFull: {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{1});
      SpanSet spans = n == 0 ? SpanSet{} : SpanSet{{Span{1, n, 0.0}}};
      return assemble(history, std::move(spans), std::move(all), options);
    }
    case MethodSpec::Kind::kTopK: {
      if (method.k == 0) throw std::invalid_argument("topk requires k >= 1");
      check_scores(history, scores);
      std::vector<std::size_t> ranked(n);
      std::iota(ranked.begin(), ranked.end(), std::size_t{1});
      sort_by_score(ranked, scores);
      ranked.resize(std::min(method.k, n));
      std::vector<std::size_t> chrono = ranked;
      std::sort(chrono.begin(), chrono.end());
      return assemble(history, runs_of(chrono, scores), std::move(ranked), options);
    }
  }
  throw std::logic_error("unhandled method kind");
}

PrunedSelection select_baseline(const DialogueHistory& history, const std::string& query,
                                const EmbeddingProvider& provider, const MethodSpec& method,
                                const PruneOptions& options) {
  switch (method.kind) {
    case MethodSpec::Kind::kDycp:
      return prune(history, query, provider, method.config, options);
    case MethodSpec::Kind::kFull:
    case MethodSpec::Kind::kNone:
      return select_scored(history, {}, method, options);
    case MethodSpec::Kind::kTopK: {
      if (method.k == 0) throw std::invalid_argument("topk requires k >= 1");
      if (history.empty()) return select_scored(history, {}, method, options);
      const QueryEmbedding q = embed_query(provider, query);
      const auto scores = score_history(history, q, options.similarity);
      return select_scored(history, scores, method, options);
    }
  }
  throw std::logic_error("unhandled method kind");
}

PrunedSelection ablate_bottom(const DialogueHistory& history, const PrunedSelection& selection,
                              std::span<const double> scores, std::size_t bottom,
                              const PruneOptions& options) {
  if (bottom == 0) throw std::invalid_argument("ablate_bottom: bottom must be >= 1");
  check_scores(history, scores);

  std::vector<std::size_t> kept;
  for (const Span& s : selection.spans.chronological()) {
    std::vector<std::size_t> within(s.length());
    std::iota(within.begin(), within.end(), s.start);
    sort_by_score(within, scores);
    const std::size_t keep = s.length() > bottom ? s.length() - bottom : 1;
    within.resize(keep);
    kept.insert(kept.end(), within.begin(), within.end());
  }
  std::sort(kept.begin(), kept.end());

  std::vector<std::size_t> ranking;
  for (std::size_t t : selection.ranking) {
    if (std::binary_search(kept.begin(), kept.end(), t)) ranking.push_back(t);
  }
  return assemble(history, runs_of(kept, scores), std::move(ranking), options);
}

}  // namespace dycp
