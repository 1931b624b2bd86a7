#include "dycp/dialogue_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dycp/errors.hpp"

namespace dycp {

std::string render_turn(std::string_view user_text, std::string_view agent_text) {
  std::string out;
  out.reserve(user_text.size() + agent_text.size() + 14);
  out.append("User: ").append(user_text).append("\nAgent: ").append(agent_text);
  return out;
}

namespace {

void check_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) throw ValidationError("embedding has a non-finite component");
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<float> values)
    : dim_(dim), data_(std::move(values)) {
  if (dim_ == 0 ? !data_.empty() : data_.size() % dim_ != 0) {
    throw DimensionError("embedding payload of " + std::to_string(data_.size()) +
                         " values is not a multiple of dim " + std::to_string(dim_));
  }
  check_finite(data_);
}

void EmbeddingMatrix::append(std::span<const float> vector) {
  if (vector.empty()) throw DimensionError("cannot append an empty embedding");
  if (dim_ == 0 && data_.empty()) dim_ = vector.size();
  if (vector.size() != dim_) {
    throw DimensionError("embedding has " + std::to_string(vector.size()) +
                         " components, store expects " + std::to_string(dim_));
  }
  check_finite(vector);
  data_.insert(data_.end(), vector.begin(), vector.end());
}

DialogueHistory DialogueHistory::from_parts(std::string dialogue_id,
                                            std::vector<TurnRecord> turns,
                                            EmbeddingMatrix embeddings) {
  if (turns.size() != embeddings.rows()) {
    throw ValidationError("dialogue '" + dialogue_id + "' has " + std::to_string(turns.size()) +
                          " turns but " + std::to_string(embeddings.rows()) + " embeddings");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].index != i + 1) {
      throw ValidationError("dialogue '" + dialogue_id + "': turn indices must run from 1");
    }
    turns[i].encoded_unit = render_turn(turns[i].user_text, turns[i].agent_text);
  }
  DialogueHistory h(std::move(dialogue_id));
  h.turns_ = std::move(turns);
  h.embeddings_ = std::move(embeddings);
  return h;
}

const TurnRecord& DialogueHistory::append_turn(std::string user_text, std::string agent_text,
                                               const EmbeddingProvider& embedder) {
  std::string unit = render_turn(user_text, agent_text);
  const Vector v = embedder.embed_one(unit);
  return append_turn(std::move(user_text), std::move(agent_text), v);
}

const TurnRecord& DialogueHistory::append_turn(std::string user_text, std::string agent_text,
                                               std::span<const float> embedding) {
  // Row first: if it throws the history is unchanged.
  embeddings_.append(embedding);
  TurnRecord rec;
  rec.index = turns_.size() + 1;
  rec.encoded_unit = render_turn(user_text, agent_text);
  rec.user_text = std::move(user_text);
  rec.agent_text = std::move(agent_text);
  turns_.push_back(std::move(rec));
  return turns_.back();
}

DialogueHistory DialogueHistory::prefix(std::size_t n) const {
  n = std::min(n, turns_.size());
  DialogueHistory h(id_);
  h.turns_.assign(turns_.begin(), turns_.begin() + static_cast<std::ptrdiff_t>(n));
  const auto values = embeddings_.values();
  h.embeddings_ = EmbeddingMatrix(
      embeddings_.dim(), std::vector<float>(values.begin(), values.begin() + n * embeddings_.dim()));
  return h;
}

DialogueHistory build_history(std::string dialogue_id,
                              const std::vector<std::pair<std::string, std::string>>& turns,
                              const EmbeddingProvider& embedder) {
  std::vector<std::string> units;
  units.reserve(turns.size());
  for (const auto& [u, a] : turns) units.push_back(render_turn(u, a));
  const auto vectors = units.empty() ? std::vector<Vector>{} : embedder.embed(units);
  if (vectors.size() != units.size()) {
    throw ProviderError(embedder.name() + " returned " + std::to_string(vectors.size()) +
                        " vectors for " + std::to_string(units.size()) + " texts");
  }
  DialogueHistory h(std::move(dialogue_id));
  for (std::size_t i = 0; i < turns.size(); ++i) {
    h.append_turn(turns[i].first, turns[i].second, vectors[i]);
  }
  return h;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 4;

}  // namespace

std::string encode_cache(const EmbeddingMatrix& matrix) {
  const auto values = matrix.values();
  std::string out;
  out.reserve(kHeaderSize + values.size() * 4);
  out.append(kCacheMagic);
  put_u32(out, kCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(matrix.dim()));
  put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

EmbeddingMatrix decode_cache(std::string_view bytes) {
  if (bytes.size() < kCacheMagic.size() || bytes.substr(0, kCacheMagic.size()) != kCacheMagic) {
    throw FormatError("embedding cache: bad magic");
  }
  if (bytes.size() < kHeaderSize) throw CorruptionError("embedding cache: truncated header");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCacheVersion) {
    throw FormatError("embedding cache: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = get_u32(bytes, 12);
  const std::uint32_t count = get_u32(bytes, 16);
  if (dim == 0 && count != 0) throw CorruptionError("embedding cache: zero dim with rows");

  const std::uint64_t n_values = static_cast<std::uint64_t>(dim) * count;
  const std::uint64_t expected = kHeaderSize + n_values * 4;
  if (bytes.size() < expected) {
    throw CorruptionError("embedding cache: payload shorter than header declares (" +
                          std::to_string(bytes.size()) + " < " + std::to_string(expected) + ")");
  }
  if (bytes.size() > expected) throw CorruptionError("embedding cache: trailing bytes");

  std::vector<float> values(n_values);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i));
  }
  try {
    return EmbeddingMatrix(dim, std::move(values));
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("embedding cache: ") + e.what());
  }
}

void save_cache(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  const std::string bytes = encode_cache(matrix);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

EmbeddingMatrix load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_cache(bytes);
}

}  // namespace dycp
