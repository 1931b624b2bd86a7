#include "dycp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dycp/errors.hpp"

namespace dycp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset I/O

namespace {

[[noreturn]] void fail(std::size_t line_no, const std::string& field, const std::string& what) {
  throw ValidationError("line " + std::to_string(line_no) + ": field '" + field + "': " + what);
}

const json& require(const json& obj, const char* key, std::size_t line_no,
                    const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(line_no, where + key, "missing");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line_no,
                           const std::string& where) {
  const json& v = require(obj, key, line_no, where);
  if (!v.is_string()) fail(line_no, where + key, "expected a string");
  return v.get<std::string>();
}

std::size_t require_index(const json& v, std::size_t line_no, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(line_no, field, "expected a non-negative integer");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

}  // namespace

DialogueEntry parse_dialogue_line(std::string_view line, std::size_t line_no) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) fail(line_no, "<root>", "expected an object");

  DialogueEntry entry;
  entry.dialogue_id = require_string(doc, "dialogue_id", line_no, "");

  const json& turns = require(doc, "turns", line_no, "");
  if (!turns.is_array()) fail(line_no, "turns", "expected an array");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::string where = "turns[" + std::to_string(i) + "].";
    const json& t = turns[i];
    if (!t.is_object()) fail(line_no, where.substr(0, where.size() - 1), "expected an object");
    DialogueTurn turn;
    turn.index = require_index(require(t, "index", line_no, where), line_no, where + "index");
    if (turn.index != i + 1) {
      fail(line_no, where + "index",
           "expected " + std::to_string(i + 1) + " (indices are contiguous from 1)");
    }
    turn.user = require_string(t, "user", line_no, where);
    turn.agent = require_string(t, "agent", line_no, where);
    entry.turns.push_back(std::move(turn));
  }

  if (const auto it = doc.find("tests"); it != doc.end()) {
    if (!it->is_array()) fail(line_no, "tests", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "tests[" + std::to_string(i) + "].";
      const json& t = (*it)[i];
      if (!t.is_object()) fail(line_no, where.substr(0, where.size() - 1), "expected an object");
      TestCase tc;
      tc.query = require_string(t, "query", line_no, where);
      tc.gold_answer = require_string(t, "gold_answer", line_no, where);
      tc.asked_after_turn = entry.turns.size();
      if (const auto a = t.find("asked_after_turn"); a != t.end() && !a->is_null()) {
        tc.asked_after_turn = require_index(*a, line_no, where + "asked_after_turn");
        if (tc.asked_after_turn > entry.turns.size()) {
          fail(line_no, where + "asked_after_turn",
               "exceeds turn count " + std::to_string(entry.turns.size()));
        }
      }
      const json& gold = require(t, "gold_turns", line_no, where);
      if (!gold.is_array()) fail(line_no, where + "gold_turns", "expected an array");
      std::set<std::size_t> unique;
      for (const json& g : gold) {
        const std::size_t idx = require_index(g, line_no, where + "gold_turns");
        if (idx < 1 || idx > tc.asked_after_turn) {
          fail(line_no, where + "gold_turns",
               "turn " + std::to_string(idx) + " outside [1, " +
                   std::to_string(tc.asked_after_turn) + "]");
        }
        unique.insert(idx);
      }
      tc.gold_turns.assign(unique.begin(), unique.end());
      entry.tests.push_back(std::move(tc));
    }
  }
  return entry;
}

std::string serialize_dialogue(const DialogueEntry& entry) {
  json turns = json::array();
  for (const auto& t : entry.turns) {
    turns.push_back({{"index", t.index}, {"user", t.user}, {"agent", t.agent}});
  }
  json tests = json::array();
  for (const auto& tc : entry.tests) {
    tests.push_back({{"query", tc.query},
                     {"gold_answer", tc.gold_answer},
                     {"gold_turns", tc.gold_turns},
                     {"asked_after_turn", tc.asked_after_turn}});
  }
  return json{{"dialogue_id", entry.dialogue_id}, {"turns", turns}, {"tests", tests}}.dump();
}

Dataset load_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  Dataset out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DialogueEntry e = parse_dialogue_line(line, line_no);
    if (!seen.insert(e.dialogue_id).second) {
      fail(line_no, "dialogue_id", "duplicate id '" + e.dialogue_id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_dialogues(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& e : dataset) out << serialize_dialogue(e) << '\n';
}

std::filesystem::path cache_path_for(const std::filesystem::path& dir,
                                     std::string_view dialogue_id) {
  std::string name;
  for (char c : dialogue_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    name.push_back(ok ? c : '_');
  }
  if (name.empty() || name == "." || name == "..") name = "_" + name;
  return dir / (name + ".emb");
}

DialogueHistory history_for(const DialogueEntry& entry, const EmbeddingProvider& provider,
                            const std::optional<std::filesystem::path>& cache) {
  if (cache && std::filesystem::exists(*cache)) {
    std::vector<TurnRecord> turns;
    turns.reserve(entry.turns.size());
    for (const auto& t : entry.turns) turns.push_back(TurnRecord{t.index, t.user, t.agent, {}});
    EmbeddingMatrix m = load_cache(*cache);
    if (provider.dim() != 0 && m.rows() > 0 && m.dim() != provider.dim()) {
      throw DimensionError("cache " + cache->string() + " has dim " + std::to_string(m.dim()) +
                           " but embedder " + provider.name() + " produces " +
                           std::to_string(provider.dim()));
    }
    return DialogueHistory::from_parts(entry.dialogue_id, std::move(turns), std::move(m));
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(entry.turns.size());
  for (const auto& t : entry.turns) pairs.emplace_back(t.user, t.agent);
  return build_history(entry.dialogue_id, pairs, provider);
}

// ---------------------------------------------------------------------------
// Metrics

MetricRow retrieval_metrics(std::span<const std::size_t> ranked,
                            std::span<const std::size_t> gold, std::span<const std::size_t> ks) {
  MetricRow row;
  for (std::size_t k : ks) {
    row.hit_at[k] = 0.0;
    row.recall_at[k] = 0.0;
    row.precision_at[k] = 0.0;
  }
  const std::set<std::size_t> gold_set(gold.begin(), gold.end());
  if (gold_set.empty()) {
    row.skipped = true;
    return row;
  }
  const auto g = static_cast<double>(gold_set.size());

  // prefix_hits[i] = gold turns among ranked[0, i)
  std::vector<std::size_t> prefix_hits(ranked.size() + 1, 0);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    prefix_hits[i + 1] = prefix_hits[i] + (gold_set.count(ranked[i]) ? 1 : 0);
  }
  for (std::size_t k : ks) {
    if (k == 0) continue;
    const std::size_t matched = prefix_hits[std::min(k, ranked.size())];
    row.hit_at[k] = matched > 0 ? 1.0 : 0.0;
    row.recall_at[k] = static_cast<double>(matched) / g;
    row.precision_at[k] = static_cast<double>(matched) / static_cast<double>(k);
  }
  const std::size_t matched = prefix_hits.back();
  row.hit = matched > 0 ? 1.0 : 0.0;
  row.recall = static_cast<double>(matched) / g;
  row.precision = ranked.empty() ? 0.0 : static_cast<double>(matched) / ranked.size();
  return row;
}

// ---------------------------------------------------------------------------
// Planted-segment benchmark

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi",
                                      "be", "du", "fa", "go", "hi", "ju", "pe", "so",
                                      "ar", "el", "in", "on", "ul", "yo", "we", "xa"};
constexpr const char* kFiller[] = {"i",    "you",   "we",    "the",  "a",    "and",  "so",
                                   "really", "think", "that", "was",  "it",   "yes",  "well",
                                   "my",   "our",   "just",  "like", "know", "okay"};
constexpr const char* kQuestion[] = {"what", "when", "where", "which", "who", "how", "recall"};

// Portable bounded draw; std distributions differ between standard libraries.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::vector<std::vector<std::string>> topic_vocabularies(const PlantedConfig& c) {
  std::mt19937_64 rng(c.seed ^ 0x5eedc0ffee123457ULL);
  std::set<std::string> used(std::begin(kFiller), std::end(kFiller));
  used.insert(std::begin(kQuestion), std::end(kQuestion));
  std::vector<std::vector<std::string>> vocab(c.topics);
  for (auto& words : vocab) {
    while (words.size() < c.topic_vocab) {
      std::string w;
      const std::size_t syl = 2 + draw(rng, 3);
      for (std::size_t s = 0; s < syl; ++s) w += kSyllables[draw(rng, std::size(kSyllables))];
      if (used.insert(w).second) words.push_back(std::move(w));
    }
  }
  return vocab;
}

std::string utterance(std::mt19937_64& rng, const std::vector<std::string>& topic_words) {
  std::vector<std::string> words;
  const std::size_t n_topic = 3 + draw(rng, 3);
  for (std::size_t i = 0; i < n_topic; ++i) words.push_back(topic_words[draw(rng, topic_words.size())]);
  for (std::size_t i = 0; i < 3; ++i) words.push_back(kFiller[draw(rng, std::size(kFiller))]);
  for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[draw(rng, i)]);
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string make_query(std::mt19937_64& rng, const std::vector<std::string>& topic_words) {
  std::string q = kQuestion[draw(rng, std::size(kQuestion))];
  for (std::size_t i = 0; i < 4; ++i) q += " " + topic_words[draw(rng, topic_words.size())];
  return q;
}

}  // namespace

std::string planted_query(const PlantedConfig& config, std::size_t topic, std::uint64_t salt) {
  if (topic < 1 || topic > config.topics) throw std::invalid_argument("planted_query: bad topic");
  const auto vocab = topic_vocabularies(config);
  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + salt);
  return make_query(rng, vocab[topic - 1]);
}

Dataset generate_planted_benchmark(const PlantedConfig& c) {
  if (c.dialogues == 0 || c.turns_per_dialogue == 0 || c.block_len == 0 || c.topic_vocab == 0 ||
      c.topics < 2) {
    throw std::invalid_argument("planted benchmark: parameters must be positive and topics >= 2");
  }
  const auto vocab = topic_vocabularies(c);
  std::mt19937_64 rng(c.seed);
  Dataset out;
  for (std::size_t d = 0; d < c.dialogues; ++d) {
    DialogueEntry e;
    e.dialogue_id = "planted-" + std::to_string(c.seed) + "-" + std::to_string(d + 1);
    std::vector<std::vector<std::size_t>> topic_turns(c.topics);
    for (std::size_t t = 0; t < c.turns_per_dialogue; ++t) {
      const std::size_t topic = (t / c.block_len) % c.topics;
      topic_turns[topic].push_back(t + 1);
      e.turns.push_back(DialogueTurn{t + 1, utterance(rng, vocab[topic]), utterance(rng, vocab[topic])});
    }
    for (std::size_t i = 0; i < c.tests_per_dialogue; ++i) {
      std::size_t topic = draw(rng, c.topics);
      if (topic_turns[topic].empty()) topic = 0;
      TestCase tc;
      tc.query = make_query(rng, vocab[topic]);
      tc.gold_answer = "topic " + std::to_string(topic + 1);
      tc.gold_turns = topic_turns[topic];
      tc.asked_after_turn = c.turns_per_dialogue;
      e.tests.push_back(std::move(tc));
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison runs

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Everything a method needs for one test case.
struct PreparedCase {
  const DialogueEntry* entry = nullptr;
  std::size_t case_index = 0;
  const DialogueHistory* full = nullptr;
  std::vector<double> scores;
  double score_ms = 0.0;
  std::optional<std::string> error;
};

CaseRecord base_record(const PreparedCase& pc) {
  CaseRecord r;
  r.dialogue_id = pc.entry->dialogue_id;
  r.case_index = pc.case_index;
  return r;
}

void fill_record(CaseRecord& r, const PrunedSelection& sel, const TestCase& tc,
                 std::span<const std::size_t> ks) {
  r.turns = sel.turn_indices;
  r.ranking = sel.ranking;
  r.metrics = retrieval_metrics(sel.ranking, tc.gold_turns, ks);
  r.tokens_full = sel.token_full;
  r.tokens_pruned = sel.token_pruned;
  r.rs = sel.stats.retrieved_segments;
  r.tps = sel.stats.turns_per_segment;
  r.turns_total = sel.stats.turns_total;
}

void summarize(RunRecord& run) {
  for (std::size_t k : run.ks) run.hit_at[k] = run.recall_at[k] = run.precision_at[k] = 0.0;
  std::size_t ok = 0, scored = 0;
  for (const auto& c : run.cases) {
    if (c.error) {
      ++run.errors;
      continue;
    }
    ++ok;
    run.tokens_full_mean += static_cast<double>(c.tokens_full);
    run.tokens_pruned_mean += static_cast<double>(c.tokens_pruned);
    run.tps += c.tps;
    run.rs += static_cast<double>(c.rs);
    run.turns_total_mean += static_cast<double>(c.turns_total);
    run.prune_ms_mean += c.prune_ms;
    if (c.metrics.skipped) {
      ++run.skipped_empty_gold;
      continue;
    }
    ++scored;
    run.hit += c.metrics.hit;
    run.recall += c.metrics.recall;
    run.precision += c.metrics.precision;
    for (std::size_t k : run.ks) {
      run.hit_at[k] += c.metrics.hit_at.at(k);
      run.recall_at[k] += c.metrics.recall_at.at(k);
      run.precision_at[k] += c.metrics.precision_at.at(k);
    }
  }
  run.evaluated = scored;
  if (ok > 0) {
    const auto n = static_cast<double>(ok);
    run.tokens_full_mean /= n;
    run.tokens_pruned_mean /= n;
    run.tps /= n;
    run.rs /= n;
    run.turns_total_mean /= n;
    run.prune_ms_mean /= n;
  }
  if (scored > 0) {
    const auto n = static_cast<double>(scored);
    run.hit /= n;
    run.recall /= n;
    run.precision /= n;
    for (std::size_t k : run.ks) {
      run.hit_at[k] /= n;
      run.recall_at[k] /= n;
      run.precision_at[k] /= n;
    }
  }
}

class Preparation {
 public:
  Preparation(const Dataset& dataset, const EmbeddingProvider& provider, const RunOptions& opt) {
    histories_.reserve(dataset.size());
    for (const auto& entry : dataset) {
      std::optional<std::string> dialogue_error;
      histories_.emplace_back();
      try {
        std::optional<std::filesystem::path> cache;
        if (opt.cache_dir) cache = cache_path_for(*opt.cache_dir, entry.dialogue_id);
        histories_.back() = history_for(entry, provider, cache);
      } catch (const Error& e) {
        dialogue_error = e.what();
      }
      for (std::size_t i = 0; i < entry.tests.size(); ++i) {
        PreparedCase pc;
        pc.entry = &entry;
        pc.case_index = i;
        pc.full = &histories_.back();
        pc.error = dialogue_error;
        if (!pc.error) {
          const auto t0 = Clock::now();
          try {
            const TestCase& tc = entry.tests[i];
            const QueryEmbedding q = embed_query(provider, tc.query);
            const DialogueHistory& h = *pc.full;
            pc.scores = score_history(h.embeddings(), q.vector, opt.prune.similarity);
            pc.scores.resize(std::min(pc.scores.size(), tc.asked_after_turn));
          } catch (const Error& e) {
            pc.error = e.what();
          }
          pc.score_ms = opt.measure_time ? ms_since(t0) : 0.0;
        }
        cases_.push_back(std::move(pc));
      }
    }
  }

  const std::vector<PreparedCase>& cases() const { return cases_; }

 private:
  // reserved up front; cases keep pointers into it
  std::vector<DialogueHistory> histories_;
  std::vector<PreparedCase> cases_;
};

// Runs `select` on the visible prefix of each case's history.
template <typename Select>
RunRecord run_method(const std::vector<PreparedCase>& cases, const RunOptions& opt,
                     std::string method, bool uses_scores, Select&& select) {
  RunRecord run;
  run.method = std::move(method);
  run.ks = opt.ks;
  for (const auto& pc : cases) {
    CaseRecord rec = base_record(pc);
    if (pc.error) {
      rec.error = pc.error;
      run.cases.push_back(std::move(rec));
      continue;
    }
    const TestCase& tc = pc.entry->tests[pc.case_index];
    std::optional<DialogueHistory> prefix;
    if (tc.asked_after_turn < pc.full->size()) prefix = pc.full->prefix(tc.asked_after_turn);
    const DialogueHistory& h = prefix ? *prefix : *pc.full;

    const auto t0 = Clock::now();
    PrunedSelection sel = select(h, std::span<const double>(pc.scores));
    const double ms = ms_since(t0) + (uses_scores ? pc.score_ms : 0.0);
    fill_record(rec, sel, tc, opt.ks);
    rec.prune_ms = opt.measure_time ? ms : 0.0;
    run.cases.push_back(std::move(rec));
  }
  summarize(run);
  return run;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string config_params(const PruneConfig& c) { return fmt_double(c.tau) + "/" + fmt_double(c.theta); }

}  // namespace

std::vector<RunRecord> run_comparison(const Dataset& dataset, std::span<const MethodSpec> methods,
                                      const EmbeddingProvider& provider,
                                      const RunOptions& options) {
  options.config.validate();
  const Preparation prep(dataset, provider, options);

  auto run_one = [&](const MethodSpec& spec) {
    MethodSpec m = spec;
    if (m.kind == MethodSpec::Kind::kDycp) m.config = options.config;
    const bool uses_scores =
        m.kind == MethodSpec::Kind::kDycp || m.kind == MethodSpec::Kind::kTopK;
    RunRecord run = run_method(prep.cases(), options, spec.label(), uses_scores,
                               [&](const DialogueHistory& h, std::span<const double> s) {
                                 return select_scored(h, s, m, options.prune);
                               });
    if (m.kind == MethodSpec::Kind::kDycp) {
      run.params["tau"] = fmt_double(m.config.tau);
      run.params["theta"] = fmt_double(m.config.theta);
    }
    if (m.kind == MethodSpec::Kind::kTopK) run.params["k"] = std::to_string(m.k);
    return run;
  };

  std::optional<RunRecord> dycp_run;
  auto dycp = [&]() -> const RunRecord& {
    if (!dycp_run) dycp_run = run_one(MethodSpec{});
    return *dycp_run;
  };

  std::vector<RunRecord> out;
  for (const MethodSpec& spec : methods) {
    if (spec.kind == MethodSpec::Kind::kDycp) {
      out.push_back(dycp());
      continue;
    }
    if (spec.auto_budget()) {
      MethodSpec m = spec;
      m.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dycp().turns_total_mean)));
      RunRecord run = run_one(m);
      run.method = spec.label();
      run.params["budget"] = "auto";
      run.params["matched_to"] = "dycp " + config_params(options.config);
      out.push_back(std::move(run));
      continue;
    }
    out.push_back(run_one(spec));
  }
  return out;
}

std::vector<RunRecord> run_ablation(const Dataset& dataset, std::span<const std::size_t> bottoms,
                                    const EmbeddingProvider& provider, const RunOptions& options) {
  options.config.validate();
  const Preparation prep(dataset, provider, options);

  std::vector<RunRecord> out;
  RunRecord base = run_method(prep.cases(), options, "dynamic", true,
                              [&](const DialogueHistory& h, std::span<const double> s) {
                                return prune_scored(h, s, options.config, options.prune);
                              });
  base.params["tau"] = fmt_double(options.config.tau);
  base.params["theta"] = fmt_double(options.config.theta);
  out.push_back(std::move(base));

  for (std::size_t m : bottoms) {
    RunRecord run = run_method(prep.cases(), options, "bottom-" + std::to_string(m), true,
                               [&](const DialogueHistory& h, std::span<const double> s) {
                                 const PrunedSelection sel =
                                     prune_scored(h, s, options.config, options.prune);
                                 return ablate_bottom(h, sel, s, m, options.prune);
                               });
    run.params = out.front().params;
    run.params["bottom"] = std::to_string(m);
    out.push_back(std::move(run));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json at_k(const std::map<std::size_t, double>& m) {
  json o = json::object();
  for (const auto& [k, v] : m) o[std::to_string(k)] = v;
  return o;
}

std::string join(std::span<const std::size_t> v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string results_json(const RunRecord& run, std::string_view run_id) {
  json params = json::object();
  for (const auto& [k, v] : run.params) params[k] = v;
  params["ks"] = run.ks;

  json overall{{"hit", run.hit},
               {"recall", run.recall},
               {"precision", run.precision},
               {"hit_at", at_k(run.hit_at)},
               {"recall_at", at_k(run.recall_at)},
               {"precision_at", at_k(run.precision_at)},
               {"tokens_full_mean", run.tokens_full_mean},
               {"tokens_pruned_mean", run.tokens_pruned_mean},
               {"tps", run.tps},
               {"rs", run.rs},
               {"turns_total_mean", run.turns_total_mean},
               {"prune_ms_mean", run.prune_ms_mean},
               {"evaluated", run.evaluated},
               {"skipped_empty_gold", run.skipped_empty_gold},
               {"errors", run.errors}};

  json cases = json::array();
  for (const auto& c : run.cases) {
    json row{{"dialogue_id", c.dialogue_id}, {"case", c.case_index}};
    if (c.error) {
      row["error"] = *c.error;
    } else {
      row["turns"] = c.turns;
      row["ranking"] = c.ranking;
      row["skipped"] = c.metrics.skipped;
      row["hit"] = c.metrics.hit;
      row["recall"] = c.metrics.recall;
      row["precision"] = c.metrics.precision;
      row["hit_at"] = at_k(c.metrics.hit_at);
      row["recall_at"] = at_k(c.metrics.recall_at);
      row["precision_at"] = at_k(c.metrics.precision_at);
      row["tokens_full"] = c.tokens_full;
      row["tokens_pruned"] = c.tokens_pruned;
      row["rs"] = c.rs;
      row["tps"] = c.tps;
      row["turns_total"] = c.turns_total;
      row["prune_ms"] = c.prune_ms;
    }
    cases.push_back(std::move(row));
  }
  return json{{"run_id", std::string(run_id)},
              {"method", run.method},
              {"params", params},
              {"overall", overall},
              {"cases", cases}}
      .dump(2);
}

std::string cases_table(const RunRecord& run) {
  std::ostringstream os;
  os << "dialogue_id\tcase\thit\trecall\tprecision\trs\ttps\tturns_total\ttokens_full\t"
        "tokens_pruned\tprune_ms\tturns\terror\n";
  for (const auto& c : run.cases) {
    os << c.dialogue_id << '\t' << c.case_index << '\t' << fmt_double(c.metrics.hit) << '\t'
       << fmt_double(c.metrics.recall) << '\t' << fmt_double(c.metrics.precision) << '\t' << c.rs
       << '\t' << fmt_double(c.tps) << '\t' << c.turns_total << '\t' << c.tokens_full << '\t'
       << c.tokens_pruned << '\t' << fmt_double(c.prune_ms) << '\t' << join(c.turns, ',') << '\t'
       << (c.error ? *c.error : "") << '\n';
  }
  return os.str();
}

std::string summary_table(std::span<const RunRecord> runs) {
  std::ostringstream os;
  os << "method\thit\trecall\tprecision";
  std::set<std::size_t> ks;
  for (const auto& r : runs) ks.insert(r.ks.begin(), r.ks.end());
  for (std::size_t k : ks) os << "\thit@" << k << "\trecall@" << k << "\tprecision@" << k;
  os << "\ttokens_full_mean\ttokens_pruned_mean\trs\ttps\tturns_total_mean\tprune_ms_mean\terrors\n";
  for (const auto& r : runs) {
    os << r.method << '\t' << fmt_double(r.hit) << '\t' << fmt_double(r.recall) << '\t'
       << fmt_double(r.precision);
    for (std::size_t k : ks) {
      auto get = [&](const std::map<std::size_t, double>& m) {
        const auto it = m.find(k);
        return it == m.end() ? std::string("-") : fmt_double(it->second);
      };
      os << '\t' << get(r.hit_at) << '\t' << get(r.recall_at) << '\t' << get(r.precision_at);
    }
    os << '\t' << fmt_double(r.tokens_full_mean) << '\t' << fmt_double(r.tokens_pruned_mean)
       << '\t' << fmt_double(r.rs) << '\t' << fmt_double(r.tps) << '\t'
       << fmt_double(r.turns_total_mean) << '\t' << fmt_double(r.prune_ms_mean) << '\t'
       << r.errors << '\n';
  }
  return os.str();
}

std::vector<std::filesystem::path> write_reports(std::span<const RunRecord> runs,
                                                 const std::filesystem::path& dir,
                                                 std::string_view run_tag) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    written.push_back(p);
  };
  for (const auto& r : runs) {
    const std::string run_id = std::string(run_tag) + ":" + r.method;
    write(dir / (r.method + ".json"), results_json(r, run_id) + "\n");
    write(dir / (r.method + "_cases.tsv"), cases_table(r));
  }
  write(dir / "summary.tsv", summary_table(runs));
  return written;
}

// ---------------------------------------------------------------------------
// Judge prompt

JudgePrompt build_judge_prompt(std::string_view history, std::string_view question,
                               std::string_view gold, std::string_view response) {
  std::string t;
  t += "You are an impartial judge. You will be shown Conversation History, User Question, "
       "Gold Response and Model Response.\n\n";
  t += "Conversation History:\n";
  t += history;
  t += "\n\nUser Question:\n";
  t += question;
  t += "\n\nGold Response:\n";
  t += gold;
  t += "\n\nModel Response:\n";
  t += response;
  t += "\n\nPlease evaluate whether the Model Response accurately answers the User Question, "
       "referencing the proper information from the Conversation History, and using the Gold "
       "Response as a reference. Begin your evaluation by providing a short explanation, then "
       "you must rate Model Response on an integer rating of 1 to 100 by strictly following "
       "this format: [[rating]].";
  return JudgePrompt{std::move(t)};
}

int parse_rating(std::string_view text) {
  static const std::regex pattern(R"(\[\[\s*rating\s*\]\]\s*:?\s*(\d+)|\[\[\s*(\d+)\s*\]\])");
  std::optional<int> rating;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    const std::string digits = m[1].matched ? m[1].str() : m[2].str();
    if (digits.size() > 3) continue;
    const int v = std::stoi(digits);
    if (v >= 1 && v <= 100) rating = v;
  }
  if (!rating) throw ParseError("no rating in 1..100 found");
  return *rating;
}

bool exact_match(std::string_view response, std::string_view gold) {
  auto lower = [](std::string_view v) {
    std::string out(v);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  };
  return lower(response).find(lower(gold)) != std::string::npos;
}

}  // namespace dycp
