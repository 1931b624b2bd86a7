#include "dycp/service.hpp"

#include <mutex>

#include <httplib.h>

#include "dycp/eval.hpp"

namespace dycp {

using nlohmann::json;

json selection_json(const PrunedSelection& selection) {
  json spans = json::array();
  for (const Span& s : selection.spans.chronological()) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"gain", s.gain}});
  }
  return json{{"spans", spans},
              {"turns", selection.turn_indices},
              {"rs", selection.stats.retrieved_segments},
              {"tps", selection.stats.turns_per_segment},
              {"tokens_full", selection.token_full},
              {"tokens_pruned", selection.token_pruned},
              {"context", selection.rendered_context}};
}

ServiceState::ServiceState(std::shared_ptr<const EmbeddingProvider> provider,
                           PruneConfig defaults, PruneOptions options)
    : provider_(std::move(provider)), defaults_(defaults), options_(options) {
  if (!provider_) throw std::invalid_argument("ServiceState needs an embedding provider");
  defaults_.validate();
}

std::shared_ptr<ServiceState::Session> ServiceState::find(const std::string& dialogue_id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(dialogue_id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<ServiceState::Session> ServiceState::find_or_create(
    const std::string& dialogue_id) {
  if (auto s = find(dialogue_id)) return s;
  std::unique_lock lock(sessions_mutex_);
  auto& slot = sessions_[dialogue_id];
  if (!slot) {
    slot = std::make_shared<Session>();
    slot->history = DialogueHistory(dialogue_id);
  }
  return slot;
}

std::size_t ServiceState::ingest_turn(const std::string& dialogue_id,
                                      std::optional<std::size_t> index, std::string user,
                                      std::string agent) {
  if (index && *index == 0) throw ValidationError("turn index must be >= 1");
  const Vector v = provider_->embed_one(render_turn(user, agent));

  auto session = find_or_create(dialogue_id);
  std::unique_lock lock(session->mutex);
  const std::size_t next = session->history.size() + 1;
  if (index && *index != next) {
    throw ConflictError("dialogue '" + dialogue_id + "' expects turn " + std::to_string(next) +
                        ", got " + std::to_string(*index));
  }
  return session->history.append_turn(std::move(user), std::move(agent), v).index;
}

PrunedSelection ServiceState::prune(const std::string& dialogue_id, const std::string& query,
                                    std::optional<double> tau,
                                    std::optional<double> theta) const {
  auto session = find(dialogue_id);
  if (!session) throw NotFoundError("unknown dialogue '" + dialogue_id + "'");
  PruneConfig cfg = defaults_;
  if (tau) cfg.tau = *tau;
  if (theta) cfg.theta = *theta;
  std::shared_lock lock(session->mutex);
  return dycp::prune(session->history, query, *provider_, cfg, options_);
}

void ServiceState::add_dialogue(DialogueHistory history) {
  std::unique_lock lock(sessions_mutex_);
  const std::string id = history.id();
  if (sessions_.count(id)) throw ConflictError("dialogue '" + id + "' already exists");
  auto s = std::make_shared<Session>();
  s->history = std::move(history);
  sessions_.emplace(id, std::move(s));
}

std::vector<std::string> ServiceState::dialogue_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  return ids;
}

std::size_t ServiceState::turn_count(const std::string& dialogue_id) const {
  auto session = find(dialogue_id);
  if (!session) throw NotFoundError("unknown dialogue '" + dialogue_id + "'");
  std::shared_lock lock(session->mutex);
  return session->history.size();
}

void ServiceState::snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Dataset sessions;
  for (const auto& id : dialogue_ids()) {
    auto session = find(id);
    std::shared_lock lock(session->mutex);
    DialogueEntry e;
    e.dialogue_id = id;
    for (const auto& t : session->history.turns()) {
      e.turns.push_back(DialogueTurn{t.index, t.user_text, t.agent_text});
    }
    save_cache(session->history.embeddings(), cache_path_for(dir, id));
    sessions.push_back(std::move(e));
  }
  write_dialogues(sessions, dir / "sessions.jsonl");
}

namespace {

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                  "application/json");
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body);
  if (!body.is_object()) throw ValidationError("request body must be a JSON object");
  return body;
}

// Maps exceptions raised while handling a request onto status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, "conflict", e.what());
  } catch (const ProviderError& e) {
    res.set_header("Retry-After", "1");
    send_error(res, 502, "provider_error", e.what());
  } catch (const DimensionError& e) {
    res.set_header("Retry-After", "1");
    send_error(res, 502, "provider_error", e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, "invalid", e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, "invalid", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

std::optional<double> optional_number(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
  return it->get<double>();
}

std::string required_string(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end() || !it->is_string()) {
    throw ValidationError(std::string("'") + key + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

HttpService::HttpService(ServiceState& state)
    : state_(state), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });

  server_->Post(R"(/dialogues/([^/]+)/turns)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const json body = parse_body(req);
                    std::optional<std::size_t> index;
                    if (const auto it = body.find("index"); it != body.end() && !it->is_null()) {
                      if (!it->is_number_integer() || it->get<long long>() < 1) {
                        throw ValidationError("'index' must be a positive integer");
                      }
                      index = static_cast<std::size_t>(it->get<long long>());
                    }
                    state_.ingest_turn(req.matches[1], index, required_string(body, "user"),
                                       required_string(body, "agent"));
                    res.status = 204;
                  });
                });

  server_->Post(R"(/dialogues/([^/]+)/prune)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const json body = parse_body(req);
                    const PrunedSelection sel =
                        state_.prune(req.matches[1], required_string(body, "query"),
                                     optional_number(body, "tau"), optional_number(body, "theta"));
                    res.status = 200;
                    res.set_content(selection_json(sel).dump(), "application/json");
                  });
                });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen() { return server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

}  // namespace dycp
