#include "dycp/embedding.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dycp/errors.hpp"

namespace dycp {

using nlohmann::json;

Vector EmbeddingProvider::embed_one(const std::string& text) const {
  auto out = embed({text});
  if (out.size() != 1) throw ProviderError(name() + ": expected exactly one vector");
  return std::move(out.front());
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

Vector hash_embed(std::string_view text, std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (begin == i) break;
    const std::uint64_t h = fnv1a64(text.substr(begin, i - begin));
    acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  Vector out(dim, 0.0f);
  if (norm > 0.0) {
    for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(acc[k] / norm);
  }
  return out;
}

}  // namespace

std::vector<Vector> test_embed(const std::vector<std::string>& texts, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("test_embed: dim must be >= 1");
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, dim));
  return out;
}

TestEmbedder::TestEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("TestEmbedder: dim must be >= 1");
}

std::string TestEmbedder::name() const { return "test:" + std::to_string(dim_); }

std::vector<Vector> TestEmbedder::embed(const std::vector<std::string>& texts) const {
  return test_embed(texts, dim_);
}

std::string make_embedding_request(const std::string& model,
                                   const std::vector<std::string>& texts) {
  return json{{"model", model}, {"texts", texts}}.dump();
}

std::vector<Vector> parse_embedding_response(std::string_view body, std::size_t expected_count,
                                             std::size_t expected_dim) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("embedding response is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dim") || !doc.contains("embeddings")) {
    throw ProviderError("embedding response must contain 'dim' and 'embeddings'");
  }
  const json& jdim = doc["dim"];
  if (!jdim.is_number_integer() || jdim.get<long long>() <= 0) {
    throw ProviderError("embedding response 'dim' must be a positive integer");
  }
  const auto dim = static_cast<std::size_t>(jdim.get<long long>());
  if (expected_dim != 0 && dim != expected_dim) {
    throw ProviderError("embedding dim " + std::to_string(dim) + " does not match expected " +
                        std::to_string(expected_dim));
  }
  const json& rows = doc["embeddings"];
  if (!rows.is_array()) throw ProviderError("'embeddings' must be an array");
  if (rows.size() != expected_count) {
    throw ProviderError("expected " + std::to_string(expected_count) + " embeddings, got " +
                        std::to_string(rows.size()));
  }
  std::vector<Vector> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const json& row = rows[r];
    if (!row.is_array() || row.size() != dim) {
      throw ProviderError("embedding " + std::to_string(r) + " does not have " +
                          std::to_string(dim) + " components");
    }
    Vector v;
    v.reserve(dim);
    for (const json& x : row) {
      if (!x.is_number()) throw ProviderError("embedding component is not a number");
      const double d = x.get<double>();
      const auto f = static_cast<float>(d);
      if (!std::isfinite(d) || !std::isfinite(f)) {
        throw ProviderError("embedding " + std::to_string(r) + " has a non-finite component");
      }
      v.push_back(f);
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEmbedderOptions options)
    : options_(std::move(options)), dim_(options_.expected_dim) {
  const auto scheme = options_.url.find("://");
  const std::size_t host_begin = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = options_.url.find('/', host_begin);
  if (slash == std::string::npos) {
    base_ = options_.url;
    path_ = "/embed";
  } else {
    base_ = options_.url.substr(0, slash);
    path_ = options_.url.substr(slash);
    if (path_ == "/") path_ = "/embed";
  }
  if (scheme == std::string::npos) base_ = "http://" + base_;
  if (options_.attempts < 1) options_.attempts = 1;
}

std::string HttpEmbedder::name() const { return "http:" + base_ + path_; }

std::vector<Vector> HttpEmbedder::embed(const std::vector<std::string>& texts) const {
  if (texts.empty()) return {};
  const std::string body = make_embedding_request(options_.model, texts);

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    httplib::Client client(base_);
    const auto secs = options_.timeout.count() / 1000;
    const auto usecs = (options_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw ProviderError(name() + " returned HTTP " + std::to_string(res->status));
    } else {
      auto vectors = parse_embedding_response(res->body, texts.size(), dim_.load());
      std::size_t expected = 0;
      const std::size_t got = vectors.front().size();
      if (!dim_.compare_exchange_strong(expected, got) && expected != got) {
        throw ProviderError("embedding dim " + std::to_string(got) + " does not match " +
                            std::to_string(expected));
      }
      return vectors;
    }
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(name() + ": " + last_error + " after " +
                       std::to_string(options_.attempts) + " attempts");
}

}  // namespace dycp
