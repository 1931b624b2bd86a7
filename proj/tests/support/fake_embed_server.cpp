#include "fake_embed_server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dycp/embedding.hpp"

namespace dycp::testing {

FakeEmbedServer::FakeEmbedServer(Handler handler) : server_(std::make_unique<httplib::Server>()) {
  server_->Post("/embed", [this, handler = std::move(handler)](const httplib::Request& req,
                                                              httplib::Response& res) {
    const int n = ++requests_;
    auto [status, body] = handler(req.body, n);
    res.status = status;
    res.set_content(body, "application/json");
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

FakeEmbedServer::~FakeEmbedServer() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

FakeEmbedServer::Handler FakeEmbedServer::test_embedder(std::size_t dim) {
  return [dim](const std::string& body, int) {
    const auto req = nlohmann::json::parse(body);
    const auto texts = req.at("texts").get<std::vector<std::string>>();
    const auto vecs = dycp::test_embed(texts, dim);
    return std::pair<int, std::string>{
        200, nlohmann::json{{"dim", dim}, {"embeddings", vecs}}.dump()};
  };
}

}  // namespace dycp::testing
