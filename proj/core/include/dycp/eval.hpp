#pragma once

// Benchmark ingestion, retrieval metrics, synthetic planted-segment data and
// method comparison runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dycp/dialogue_store.hpp"
#include "dycp/embedding.hpp"
#include "dycp/pruner.hpp"

namespace dycp {

struct TestCase {
  std::string query;
  std::string gold_answer;
  std::vector<std::size_t> gold_turns;  // sorted, unique
  std::size_t asked_after_turn = 0;     // visible history length

  bool operator==(const TestCase&) const = default;
};

struct DialogueTurn {
  std::size_t index = 0;
  std::string user;
  std::string agent;

  bool operator==(const DialogueTurn&) const = default;
};

struct DialogueEntry {
  std::string dialogue_id;
  std::vector<DialogueTurn> turns;
  std::vector<TestCase> tests;

  bool operator==(const DialogueEntry&) const = default;
};

using Dataset = std::vector<DialogueEntry>;

/// Parses one JSONL line; `line_no` is used in error messages only.
/// Throws ValidationError naming the line and field on any problem.
DialogueEntry parse_dialogue_line(std::string_view line, std::size_t line_no);
std::string serialize_dialogue(const DialogueEntry& entry);

Dataset load_dialogues(const std::filesystem::path& path);
void write_dialogues(const Dataset& dataset, const std::filesystem::path& path);

/// History of `entry` embedded by `provider`, or read from `cache` when the
/// file exists (its row count must match the turn count).
DialogueHistory history_for(const DialogueEntry& entry, const EmbeddingProvider& provider,
                            const std::optional<std::filesystem::path>& cache = std::nullopt);

/// Cache file name used for a dialogue id inside a cache directory.
std::filesystem::path cache_path_for(const std::filesystem::path& dir,
                                     std::string_view dialogue_id);

struct MetricRow {
  bool skipped = false;  // gold set was empty
  double hit = 0.0, recall = 0.0, precision = 0.0;
  std::map<std::size_t, double> hit_at, recall_at, precision_at;
};

/// `ranked` is the method's preference order. Precision@k divides by k
/// even when fewer than k turns were retrieved. Overall values use the
/// full retrieved list.
MetricRow retrieval_metrics(std::span<const std::size_t> ranked,
                            std::span<const std::size_t> gold, std::span<const std::size_t> ks);

struct PlantedConfig {
  std::uint64_t seed = 1;
  std::size_t dialogues = 20;
  std::size_t turns_per_dialogue = 60;
  std::size_t topics = 6;
  std::size_t block_len = 10;
  std::size_t tests_per_dialogue = 6;
  std::size_t topic_vocab = 12;
};

/// Block b (0-based) of every dialogue covers turns [b*block_len+1, ...]
/// and talks about topic (b mod topics)+1. Each test query uses one topic's
/// words and its gold turns are every block of that topic.
Dataset generate_planted_benchmark(const PlantedConfig& config);

/// Query whose words come from `topic` (1-based) only.
std::string planted_query(const PlantedConfig& config, std::size_t topic, std::uint64_t salt);

struct CaseRecord {
  std::string dialogue_id;
  std::size_t case_index = 0;
  std::vector<std::size_t> turns;
  std::vector<std::size_t> ranking;
  MetricRow metrics;
  std::size_t tokens_full = 0;
  std::size_t tokens_pruned = 0;
  std::size_t rs = 0;
  double tps = 0.0;
  std::size_t turns_total = 0;
  double prune_ms = 0.0;
  std::optional<std::string> error;
};

struct RunRecord {
  std::string method;
  std::map<std::string, std::string> params;
  std::vector<std::size_t> ks;
  std::vector<CaseRecord> cases;

  // Means over non-errored cases; metric means also skip empty-gold cases.
  double hit = 0.0, recall = 0.0, precision = 0.0;
  std::map<std::size_t, double> hit_at, recall_at, precision_at;
  double tokens_full_mean = 0.0, tokens_pruned_mean = 0.0;
  double tps = 0.0, rs = 0.0, turns_total_mean = 0.0, prune_ms_mean = 0.0;
  std::size_t evaluated = 0, skipped_empty_gold = 0, errors = 0;
};

struct RunOptions {
  std::vector<std::size_t> ks{1, 3, 5, 10};
  PruneConfig config;
  PruneOptions prune;
  std::optional<std::filesystem::path> cache_dir;
  /// When false, prune_ms is reported as 0 so reports are reproducible.
  bool measure_time = true;
  std::string run_tag = "run";
};

/// Evaluates every method on every test case. A topk method without k gets
/// round(mean DyCP turns_total) over the same dataset. Provider failures are
/// recorded per case and the run continues.
std::vector<RunRecord> run_comparison(const Dataset& dataset, std::span<const MethodSpec> methods,
                                      const EmbeddingProvider& provider,
                                      const RunOptions& options);

/// DyCP followed by Bottom-m for every m in `bottoms`.
std::vector<RunRecord> run_ablation(const Dataset& dataset, std::span<const std::size_t> bottoms,
                                    const EmbeddingProvider& provider, const RunOptions& options);

std::string results_json(const RunRecord& run, std::string_view run_id);
std::string cases_table(const RunRecord& run);
std::string summary_table(std::span<const RunRecord> runs);

/// Writes <dir>/<method>.json and <dir>/<method>_cases.tsv for each run and
/// <dir>/summary.tsv for all of them. Returns the written paths.
std::vector<std::filesystem::path> write_reports(std::span<const RunRecord> runs,
                                                 const std::filesystem::path& dir,
                                                 std::string_view run_tag);

// Answer-quality judge prompt.
struct JudgePrompt {
  std::string text;
};

JudgePrompt build_judge_prompt(std::string_view history, std::string_view question,
                               std::string_view gold, std::string_view response);

/// Accepts "[[rating]] 95" and "[[95]]"; the last occurrence wins. Throws
/// ParseError when no rating in 1..100 is present.
int parse_rating(std::string_view text);

/// Case-insensitive containment of the gold answer in the response.
bool exact_match(std::string_view response, std::string_view gold);

}  // namespace dycp
