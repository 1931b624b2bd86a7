#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dycp/dialogue_store.hpp"
#include "dycp/errors.hpp"
#include "dycp/eval.hpp"
#include "dycp/pruner.hpp"
#include "dycp/service.hpp"

namespace dycp::cli {

using nlohmann::json;

std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::string(v);
}

namespace {

double parse_double(const std::string& text, const char* what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) {
    throw std::invalid_argument(std::string("invalid value for ") + what + ": '" + text + "'");
  }
  return v;
}

Similarity parse_similarity(const std::string& s) {
  if (s == "dot") return Similarity::kDot;
  if (s == "cosine") return Similarity::kCosine;
  throw std::invalid_argument("similarity must be 'dot' or 'cosine', got '" + s + "'");
}

}  // namespace

Settings resolve_settings(const SettingOverrides& flags, const EnvLookup& env) {
  Settings s;
  json file = json::object();
  std::optional<std::string> config_path = flags.config_file;
  if (!config_path) config_path = env("DYCP_CONFIG");
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + *config_path);
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config file " + *config_path + ": " + e.what());
    }
    if (!file.is_object()) throw std::invalid_argument("config file must hold a JSON object");
  }

  auto number = [&](const std::optional<double>& flag, const char* env_name, const char* key,
                    double fallback) {
    if (flag) return *flag;
    if (auto v = env(env_name)) return parse_double(*v, env_name);
    if (const auto it = file.find(key); it != file.end()) {
      if (!it->is_number()) throw std::invalid_argument(std::string("config '") + key + "' must be a number");
      return it->get<double>();
    }
    return fallback;
  };
  auto text = [&](const std::optional<std::string>& flag, const char* env_name, const char* key,
                  const std::string& fallback) {
    if (flag) return *flag;
    if (auto v = env(env_name)) return *v;
    if (const auto it = file.find(key); it != file.end()) {
      if (!it->is_string()) throw std::invalid_argument(std::string("config '") + key + "' must be a string");
      return it->get<std::string>();
    }
    return fallback;
  };

  s.tau = number(flags.tau, "DYCP_TAU", "tau", s.tau);
  s.theta = number(flags.theta, "DYCP_THETA", "theta", s.theta);
  s.embedder = text(flags.embedder, "DYCP_EMBEDDER", "embedder", s.embedder);
  s.similarity = parse_similarity(text(flags.similarity, "DYCP_SIMILARITY", "similarity", "dot"));
  return s;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const std::string& spec) {
  if (spec.rfind("test:", 0) == 0) {
    const std::string rest = spec.substr(5);
    std::size_t pos = 0;
    unsigned long dim = 0;
    try {
      dim = std::stoul(rest, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != rest.size() || dim == 0) {
      throw std::invalid_argument("embedder 'test:<dim>' needs a positive dim, got '" + spec + "'");
    }
    return std::make_unique<TestEmbedder>(dim);
  }
  if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
    std::string url = spec.rfind("http:", 0) == 0 ? spec.substr(5) : spec;
    if (url.rfind("//", 0) == 0) {
      url = "http:" + url;
    } else if (url.find("://") == std::string::npos) {
      url = "http://" + url;
    }
    HttpEmbedderOptions opt;
    const std::size_t authority = url.find("://") + 3;
    const std::size_t slash = url.find('/', authority);
    if (slash != std::string::npos) {
      const std::size_t colon = url.find(':', slash);
      if (colon != std::string::npos) {
        opt.model = url.substr(colon + 1);
        url.erase(colon);
      }
    } else {
      // host[:port][:model]
      const std::size_t first = url.find(':', authority);
      const std::size_t second = first == std::string::npos ? first : url.find(':', first + 1);
      if (second != std::string::npos) {
        opt.model = url.substr(second + 1);
        url.erase(second);
      }
    }
    opt.url = url;
    return std::make_unique<HttpEmbedder>(opt);
  }
  throw std::invalid_argument("unknown embedder '" + spec + "' (expected test:<dim> or http:<url>[:model])");
}

namespace {

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size() || v == 0) {
      throw std::invalid_argument(std::string("invalid ") + what + " list '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
  return out;
}

std::vector<MethodSpec> parse_methods(const std::string& text, std::optional<std::size_t> k) {
  std::vector<MethodSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    MethodSpec m = MethodSpec::parse(item);
    if (m.kind == MethodSpec::Kind::kTopK && item == "topk") {
      if (!k) throw std::invalid_argument("method 'topk' needs --k (or use topk:auto)");
      m.k = *k;
    }
    out.push_back(m);
  }
  if (out.empty()) throw std::invalid_argument("no methods given");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Options shared by the data-driven subcommands.
struct Common {
  SettingOverrides overrides;
  double tau = 0, theta = 0;
  std::string embedder, similarity, config;
  std::string dialogues;
  std::string cache;

  void add(CLI::App& sub, bool needs_dataset) {
    auto* d = sub.add_option("--dialogues", dialogues, "Dialogue dataset (JSONL)");
    if (needs_dataset) d->required();
    sub.add_option("--cache", cache, "Embedding cache directory");
    sub.add_option("--embedder", embedder, "Embedder: test:<dim> or http:<url>[:model]");
    sub.add_option("--tau", tau, "Gain threshold");
    sub.add_option("--theta", theta, "Stopping threshold");
    sub.add_option("--similarity", similarity, "dot or cosine");
    sub.add_option("--config", config, "JSON config file");
  }

  Settings resolve(const CLI::App& sub, const EnvLookup& env) {
    if (sub.count("--tau")) overrides.tau = tau;
    if (sub.count("--theta")) overrides.theta = theta;
    if (sub.count("--embedder")) overrides.embedder = embedder;
    if (sub.count("--similarity")) overrides.similarity = similarity;
    if (sub.count("--config")) overrides.config_file = config;
    return resolve_settings(overrides, env);
  }

  std::optional<std::filesystem::path> cache_dir() const {
    if (cache.empty()) return std::nullopt;
    return std::filesystem::path(cache);
  }
};

PruneConfig config_of(const Settings& s) {
  PruneConfig c;
  c.tau = s.tau;
  c.theta = s.theta;
  c.validate();
  return c;
}

const DialogueEntry& find_entry(const Dataset& data, const std::string& id) {
  for (const auto& e : data) {
    if (e.dialogue_id == id) return e;
  }
  throw NotFoundError("unknown dialogue '" + id + "'");
}

void print_selection_text(std::ostream& out, const std::string& id, const PrunedSelection& sel) {
  out << "dialogue: " << id << '\n';
  out << "spans: ";
  bool first = true;
  for (const Span& s : sel.spans.chronological()) {
    out << (first ? "" : ",") << '(' << s.start << ',' << s.end << ')';
    first = false;
  }
  out << "\nturns: ";
  for (std::size_t i = 0; i < sel.turn_indices.size(); ++i) {
    out << (i ? "," : "") << sel.turn_indices[i];
  }
  out << "\nrs: " << sel.stats.retrieved_segments << "  tps: " << fmt(sel.stats.turns_per_segment)
      << "\ntokens_full: " << sel.token_full << "  tokens_pruned: " << sel.token_pruned << "\n";
  if (!sel.rendered_context.empty()) out << '\n' << sel.rendered_context << '\n';
}

void print_summary(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << summary_table(runs);
}

// sigwait-based shutdown for `serve`.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
  }
  ~SignalWaiter() { pthread_sigmask(SIG_SETMASK, &old_, nullptr); }

  void wait() {
    int sig = 0;
    sigwait(&set_, &sig);
  }

 private:
  sigset_t set_{};
  sigset_t old_{};
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env) {
  CLI::App app{"Dynamic context pruning for long dialogues"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic planted-segment benchmark");
  PlantedConfig planted;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output JSONL path")->required();
  gen->add_option("--seed", planted.seed, "RNG seed");
  gen->add_option("--count", planted.dialogues, "Number of dialogues");
  gen->add_option("--turns", planted.turns_per_dialogue, "Turns per dialogue");
  gen->add_option("--topics", planted.topics, "Number of topics");
  gen->add_option("--block-len", planted.block_len, "Turns per topic block");
  gen->add_option("--tests", planted.tests_per_dialogue, "Test queries per dialogue");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Embed every turn and write embedding caches");
  Common ingest_opts;
  ingest_opts.add(*ingest, true);

  // prune
  auto* prune_cmd = app.add_subcommand("prune", "Select context for one query");
  Common prune_opts;
  prune_opts.add(*prune_cmd, true);
  std::string dialogue_id, query, format = "text";
  prune_cmd->add_option("--dialogue", dialogue_id, "Dialogue id")->required();
  prune_cmd->add_option("--query", query, "User query")->required();
  prune_cmd->add_option("--format", format, "text or json")
      ->check(CLI::IsMember({"text", "json"}));

  // evaluate / compare / ablate
  std::string method = "dycp", ks_text = "1,3,5,10", bottom_text = "1,2,3", out_dir;
  std::optional<std::size_t> k;
  bool no_timing = false;
  std::uint64_t seed = 0;
  auto add_eval = [&](CLI::App* sub, Common& c, bool with_method) {
    c.add(*sub, true);
    if (with_method) {
      sub->add_option("--method", method, "Comma-separated methods: dycp, full, none, topk[:k|:auto]");
      sub->add_option("--k", k, "k for a bare 'topk' method");
    }
    sub->add_option("--ks", ks_text, "Comma-separated cutoffs for @k metrics");
    sub->add_option("--out", out_dir, "Report directory")->required();
    sub->add_option("--seed", seed, "Recorded in the run id");
    sub->add_flag("--no-timing", no_timing, "Report prune_ms as 0 for reproducible reports");
  };
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate one method");
  Common eval_opts;
  add_eval(evaluate, eval_opts, true);
  auto* compare = app.add_subcommand("compare", "Compare several methods");
  Common compare_opts;
  add_eval(compare, compare_opts, true);
  auto* ablate = app.add_subcommand("ablate", "Bottom-m removal sweep over DyCP spans");
  Common ablate_opts;
  add_eval(ablate, ablate_opts, false);
  ablate->add_option("--bottom", bottom_text, "Comma-separated m values");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP sidecar");
  Common serve_opts;
  serve_opts.add(*serve, false);
  int port = 8080;
  std::string host = "127.0.0.1", snapshot;
  serve->add_option("--port", port, "Listen port (0 = ephemeral)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--snapshot", snapshot, "Directory for a snapshot written on shutdown");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("dycp");
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen) {
      const Dataset data = generate_planted_benchmark(planted);
      write_dialogues(data, gen_out);
      std::size_t tests = 0;
      for (const auto& d : data) tests += d.tests.size();
      out << "wrote " << data.size() << " dialogues, " << tests << " tests to " << gen_out << '\n';
      return kOk;
    }

    if (*ingest) {
      const Settings s = ingest_opts.resolve(*ingest, env);
      if (ingest_opts.cache.empty()) throw std::invalid_argument("ingest needs --cache");
      const auto provider = make_embedder(s.embedder);
      const Dataset data = load_dialogues(ingest_opts.dialogues);
      std::filesystem::create_directories(ingest_opts.cache);
      std::size_t turns = 0, dim = 0;
      for (const auto& entry : data) {
        const DialogueHistory h = history_for(entry, *provider);
        save_cache(h.embeddings(), cache_path_for(ingest_opts.cache, entry.dialogue_id));
        turns += h.size();
        if (h.embeddings().dim() != 0) dim = h.embeddings().dim();
      }
      out << "dialogues: " << data.size() << "  turns: " << turns << "  dim: " << dim << '\n';
      return kOk;
    }

    if (*prune_cmd) {
      const Settings s = prune_opts.resolve(*prune_cmd, env);
      const auto provider = make_embedder(s.embedder);
      const Dataset data = load_dialogues(prune_opts.dialogues);
      const DialogueEntry& entry = find_entry(data, dialogue_id);
      std::optional<std::filesystem::path> cache;
      if (auto dir = prune_opts.cache_dir()) cache = cache_path_for(*dir, entry.dialogue_id);
      const DialogueHistory h = history_for(entry, *provider, cache);
      PruneOptions popt;
      popt.similarity = s.similarity;
      const PrunedSelection sel = dycp::prune(h, query, *provider, config_of(s), popt);
      if (format == "json") {
        out << selection_json(sel).dump() << '\n';
      } else {
        print_selection_text(out, entry.dialogue_id, sel);
      }
      return kOk;
    }

    auto eval_like = [&](CLI::App* sub, Common& c) -> std::pair<Settings, RunOptions> {
      const Settings s = c.resolve(*sub, env);
      RunOptions ro;
      ro.ks = parse_list(ks_text, "ks");
      ro.config = config_of(s);
      ro.prune.similarity = s.similarity;
      ro.cache_dir = c.cache_dir();
      ro.measure_time = !no_timing;
      ro.run_tag = std::filesystem::path(c.dialogues).stem().string() + "-seed" + std::to_string(seed);
      return {s, ro};
    };

    if (*evaluate || *compare) {
      CLI::App* sub = *evaluate ? evaluate : compare;
      Common& c = *evaluate ? eval_opts : compare_opts;
      const auto [s, ro] = eval_like(sub, c);
      const auto methods = parse_methods(method, k);
      if (*evaluate && methods.size() != 1) {
        throw std::invalid_argument("evaluate takes exactly one method; use compare for several");
      }
      const auto provider = make_embedder(s.embedder);
      const Dataset data = load_dialogues(c.dialogues);
      const auto runs = run_comparison(data, methods, *provider, ro);
      const auto files = write_reports(runs, out_dir, ro.run_tag);
      print_summary(out, runs);
      out << "wrote " << files.size() << " files to " << out_dir << '\n';
      return kOk;
    }

    if (*ablate) {
      const auto [s, ro] = eval_like(ablate, ablate_opts);
      const auto bottoms = parse_list(bottom_text, "bottom");
      const auto provider = make_embedder(s.embedder);
      const Dataset data = load_dialogues(ablate_opts.dialogues);
      const auto runs = run_ablation(data, bottoms, *provider, ro);
      const auto files = write_reports(runs, out_dir, ro.run_tag);
      print_summary(out, runs);
      const RunRecord& base = runs.front();
      out << "method\tturns_total_mean\tdelta_turns\ttokens_pruned_mean\tdelta_tokens\trecall\n";
      for (const auto& r : runs) {
        out << r.method << '\t' << fmt(r.turns_total_mean) << '\t'
            << fmt(r.turns_total_mean - base.turns_total_mean) << '\t' << fmt(r.tokens_pruned_mean)
            << '\t' << fmt(r.tokens_pruned_mean - base.tokens_pruned_mean) << '\t' << fmt(r.recall)
            << '\n';
      }
      out << "wrote " << files.size() << " files to " << out_dir << '\n';
      return kOk;
    }

    if (*serve) {
      const Settings s = serve_opts.resolve(*serve, env);
      std::shared_ptr<const EmbeddingProvider> provider = make_embedder(s.embedder);
      PruneOptions popt;
      popt.similarity = s.similarity;
      ServiceState state(provider, config_of(s), popt);
      if (!serve_opts.dialogues.empty()) {
        for (const auto& entry : load_dialogues(serve_opts.dialogues)) {
          std::optional<std::filesystem::path> cache;
          if (auto dir = serve_opts.cache_dir()) cache = cache_path_for(*dir, entry.dialogue_id);
          state.add_dialogue(history_for(entry, *provider, cache));
        }
      }
      SignalWaiter signals;
      HttpService service(state);
      const int bound = service.bind(host, port);
      if (bound < 0) {
        err << "error: cannot bind " << host << ':' << port << '\n';
        return kUsage;
      }
      out << "listening on " << host << ':' << bound << std::endl;
      std::atomic<bool> signalled{false};
      std::thread stopper([&] {
        signals.wait();
        signalled = true;
        service.stop();
      });
      service.listen();
      if (!signalled) kill(getpid(), SIGTERM);
      stopper.join();
      if (!snapshot.empty()) {
        state.snapshot(snapshot);
        out << "snapshot written to " << snapshot << '\n';
      }
      return kOk;
    }
  } catch (const ProviderError& e) {
    err << "error: " << e.what() << '\n';
    return kProvider;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace dycp::cli
