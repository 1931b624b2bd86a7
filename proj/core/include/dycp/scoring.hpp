#pragma once

#include <span>
#include <string>
#include <vector>

#include "dycp/dialogue_store.hpp"
#include "dycp/embedding.hpp"

namespace dycp {

enum class Similarity { kDot, kCosine };

struct QueryEmbedding {
  Vector vector;
};

/// Embeds only the query text. Throws ProviderError if the provider breaks
/// its contract.
QueryEmbedding embed_query(const EmbeddingProvider& provider, const std::string& query);

/// score_k = <row_k, q> for every stored turn in order (or the cosine when
/// requested; zero-norm rows score 0). Throws DimensionError when widths differ.
std::vector<double> score_history(const EmbeddingMatrix& embeddings, std::span<const float> query,
                                  Similarity similarity = Similarity::kDot);

inline std::vector<double> score_history(const DialogueHistory& history, const QueryEmbedding& q,
                                         Similarity similarity = Similarity::kDot) {
  return score_history(history.embeddings(), q.vector, similarity);
}

}  // namespace dycp
