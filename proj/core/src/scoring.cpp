#include "dycp/scoring.hpp"

#include <cmath>

#include "dycp/errors.hpp"

namespace dycp {

QueryEmbedding embed_query(const EmbeddingProvider& provider, const std::string& query) {
  QueryEmbedding q{provider.embed_one(query)};
  for (float x : q.vector) {
    if (!std::isfinite(x)) throw ProviderError(provider.name() + ": non-finite query embedding");
  }
  return q;
}

std::vector<double> score_history(const EmbeddingMatrix& embeddings, std::span<const float> query,
                                  Similarity similarity) {
  const std::size_t rows = embeddings.rows();
  if (rows == 0) return {};
  const std::size_t dim = embeddings.dim();
  if (query.size() != dim) {
    throw DimensionError("query has " + std::to_string(query.size()) +
                         " components, history expects " + std::to_string(dim));
  }

  double q_norm = 0.0;
  if (similarity == Similarity::kCosine) {
    for (float x : query) q_norm += static_cast<double>(x) * x;
    q_norm = std::sqrt(q_norm);
  }

  std::vector<double> scores(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = embeddings.row(r);
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k) dot += static_cast<double>(row[k]) * query[k];
    if (similarity == Similarity::kCosine) {
      double r_norm = 0.0;
      for (float x : row) r_norm += static_cast<double>(x) * x;
      const double denom = std::sqrt(r_norm) * q_norm;
      dot = denom > 0.0 ? dot / denom : 0.0;
    }
    scores[r] = dot;
  }
  return scores;
}

}  // namespace dycp
