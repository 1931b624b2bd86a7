#pragma once

// Embedding providers: a bi-encoder is consumed only through this contract.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dycp {

using Vector = std::vector<float>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  /// Output width; 0 while not yet known (remote providers learn it from
  /// their first response).
  virtual std::size_t dim() const = 0;
  /// One vector per text, each of width dim(), all components finite.
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) const = 0;

  Vector embed_one(const std::string& text) const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Signed feature hashing of whitespace tokens followed by L2 normalization.
/// Deterministic and platform independent.
std::vector<Vector> test_embed(const std::vector<std::string>& texts, std::size_t dim);

class TestEmbedder final : public EmbeddingProvider {
 public:
  explicit TestEmbedder(std::size_t dim);

  std::string name() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) const override;

 private:
  std::size_t dim_;
};

struct HttpEmbedderOptions {
  std::string url;            // scheme://host[:port][/path]; path defaults to /embed
  std::string model = "default";
  std::size_t expected_dim = 0;  // 0 = adopt the first response's width
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds timeout{10000};
};

/// Body of an embedding request: {"model": ..., "texts": [...]}.
std::string make_embedding_request(const std::string& model,
                                   const std::vector<std::string>& texts);

/// Parses {"dim": d, "embeddings": [[...], ...]} and enforces the provider
/// contract. Throws ProviderError on any violation.
std::vector<Vector> parse_embedding_response(std::string_view body, std::size_t expected_count,
                                             std::size_t expected_dim = 0);

/// Remote embedder speaking the JSON protocol over HTTP POST. Transport
/// failures and 5xx responses are retried with exponential backoff; other
/// failures raise ProviderError immediately.
class HttpEmbedder final : public EmbeddingProvider {
 public:
  explicit HttpEmbedder(HttpEmbedderOptions options);

  std::string name() const override;
  std::size_t dim() const override { return dim_.load(); }
  std::vector<Vector> embed(const std::vector<std::string>& texts) const override;

  const HttpEmbedderOptions& options() const noexcept { return options_; }

 private:
  HttpEmbedderOptions options_;
  std::string base_;  // scheme://host:port
  std::string path_;
  mutable std::atomic<std::size_t> dim_;
};

}  // namespace dycp
