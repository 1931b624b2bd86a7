#pragma once

// In-memory sidecar: per-turn ingest and query-time pruning over HTTP.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dycp/dialogue_store.hpp"
#include "dycp/embedding.hpp"
#include "dycp/errors.hpp"
#include "dycp/kadane.hpp"
#include "dycp/pruner.hpp"

namespace httplib {
class Server;
}

namespace dycp {

/// {"spans": [...], "turns": [...], "rs", "tps", "tokens_full", "tokens_pruned", "context"}.
/// Shared by the CLI and the HTTP service so both emit identical bytes.
nlohmann::json selection_json(const PrunedSelection& selection);

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class ServiceState {
 public:
  ServiceState(std::shared_ptr<const EmbeddingProvider> provider, PruneConfig defaults,
               PruneOptions options = {});

  /// Creates the dialogue on first use. `index`, when given, must equal the
  /// current turn count + 1 (ConflictError otherwise). Returns the assigned index.
  std::size_t ingest_turn(const std::string& dialogue_id, std::optional<std::size_t> index,
                          std::string user, std::string agent);

  /// Throws NotFoundError for an unknown dialogue.
  PrunedSelection prune(const std::string& dialogue_id, const std::string& query,
                        std::optional<double> tau = std::nullopt,
                        std::optional<double> theta = std::nullopt) const;

  /// Registers a preloaded history. Throws ConflictError if the id exists.
  void add_dialogue(DialogueHistory history);

  std::vector<std::string> dialogue_ids() const;
  std::size_t turn_count(const std::string& dialogue_id) const;

  /// Writes sessions.jsonl (turn texts) and one embedding cache per dialogue.
  void snapshot(const std::filesystem::path& dir) const;

  const PruneConfig& defaults() const noexcept { return defaults_; }

 private:
  struct Session {
    mutable std::shared_mutex mutex;
    DialogueHistory history;
  };

  std::shared_ptr<Session> find(const std::string& dialogue_id) const;
  std::shared_ptr<Session> find_or_create(const std::string& dialogue_id);

  std::shared_ptr<const EmbeddingProvider> provider_;
  PruneConfig defaults_;
  PruneOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP front end over a ServiceState:
///   POST /dialogues/{id}/turns   {"index"?, "user", "agent"}  -> 204
///   POST /dialogues/{id}/prune   {"query", "tau"?, "theta"?}  -> 200 selection_json
///   GET  /healthz                                             -> 200 "ok"
/// Errors carry {"error": {"code", "message"}}.
class HttpService {
 public:
  explicit HttpService(ServiceState& state);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds, returning the port (an ephemeral one when `port` is 0).
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  bool listen();
  void stop();

 private:
  ServiceState& state_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace dycp
