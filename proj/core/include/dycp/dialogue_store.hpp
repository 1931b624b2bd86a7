#pragma once

// Append-only dialogue history: turn texts plus one embedding row per turn.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dycp/embedding.hpp"

namespace dycp {

/// Text unit embedded for a turn: "User: {user}\nAgent: {agent}".
std::string render_turn(std::string_view user_text, std::string_view agent_text);

struct TurnRecord {
  std::size_t index = 0;  // 1-based
  std::string user_text;
  std::string agent_text;
  std::string encoded_unit;

  bool operator==(const TurnRecord&) const = default;
};

/// Row-major float matrix that only grows. Width is adopted from the first
/// row when constructed empty with dim 0.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}
  /// Takes ownership of `count * dim` values. Throws DimensionError on
  /// size mismatch and ValidationError on non-finite values.
  EmbeddingMatrix(std::size_t dim, std::vector<float> values);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const noexcept { return data_.empty(); }

  /// 0-based row access.
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * dim_, dim_};
  }
  std::span<const float> values() const noexcept { return data_; }

  void append(std::span<const float> vector);
  void reserve_rows(std::size_t n) { data_.reserve(n * dim_); }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

class DialogueHistory {
 public:
  DialogueHistory() = default;
  explicit DialogueHistory(std::string dialogue_id) : id_(std::move(dialogue_id)) {}

  /// Rebuilds a history from stored turns and a matching embedding matrix.
  /// Turn indices must run 1..n and n must equal the matrix row count.
  static DialogueHistory from_parts(std::string dialogue_id, std::vector<TurnRecord> turns,
                                    EmbeddingMatrix embeddings);

  const std::string& id() const noexcept { return id_; }
  const std::vector<TurnRecord>& turns() const noexcept { return turns_; }
  const TurnRecord& turn(std::size_t index) const { return turns_.at(index - 1); }
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }
  std::size_t size() const noexcept { return turns_.size(); }
  bool empty() const noexcept { return turns_.empty(); }

  /// Embeds the turn with `embedder` and appends it. Returns the new record.
  const TurnRecord& append_turn(std::string user_text, std::string agent_text,
                                const EmbeddingProvider& embedder);
  /// Appends a turn whose embedding was computed elsewhere.
  const TurnRecord& append_turn(std::string user_text, std::string agent_text,
                                std::span<const float> embedding);

  /// Copy of the first `n` turns and rows.
  DialogueHistory prefix(std::size_t n) const;

 private:
  std::string id_;
  std::vector<TurnRecord> turns_;
  EmbeddingMatrix embeddings_;
};

/// Embeds every (user, agent) pair in one provider batch.
DialogueHistory build_history(std::string dialogue_id,
                              const std::vector<std::pair<std::string, std::string>>& turns,
                              const EmbeddingProvider& embedder);

// Cache file layout (little-endian):
//   "DYCPEMB1" | u32 version=1 | u32 dim | u32 count | count*dim binary32
// with nothing after the payload.
inline constexpr std::string_view kCacheMagic = "DYCPEMB1";
inline constexpr std::uint32_t kCacheVersion = 1;

std::string encode_cache(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_cache(std::string_view bytes);

void save_cache(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_cache(const std::filesystem::path& path);

}  // namespace dycp
