#include <doctest.h>

#include <random>

#include "dycp/errors.hpp"
#include "dycp/kadane.hpp"
#include "dycp/scoring.hpp"

using namespace dycp;

TEST_CASE("score_history inner products") {
  const EmbeddingMatrix m(2, {1, 0, 0, 1, 0.5f, 0.5f});
  const Vector q{1, 0};
  CHECK(score_history(m, q) == std::vector<double>{1, 0, 0.5});
  CHECK(score_history(m, Vector{0, 0}) == std::vector<double>{0, 0, 0});
  CHECK(score_history(EmbeddingMatrix{}, q).empty());
  CHECK_THROWS_AS(score_history(m, Vector{1, 0, 0}), DimensionError);
}

TEST_CASE("cosine similarity is opt-in") {
  const EmbeddingMatrix m(2, {2, 0, 0, 3, 0, 0});
  const auto s = score_history(m, Vector{4, 0}, Similarity::kCosine);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(s[2] == 0.0);
}

TEST_CASE("scaling rows scales scores and keeps spans") {
  std::mt19937 rng(1);
  std::normal_distribution<float> g;
  std::vector<float> v(40 * 16), v2(40 * 16);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g(rng);
    v2[i] = 2.0f * v[i];
  }
  Vector q(16);
  for (float& x : q) x = g(rng);
  const auto s1 = score_history(EmbeddingMatrix(16, v), q);
  const auto s2 = score_history(EmbeddingMatrix(16, v2), q);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s2[i] == doctest::Approx(2 * s1[i]));
  const auto a = kadane_dial(s1, PruneConfig{});
  const auto b = kadane_dial(s2, PruneConfig{});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].start == b[i].start);
    CHECK(a[i].end == b[i].end);
  }
}

TEST_CASE("scores are linear in the query") {
  std::mt19937 rng(2);
  std::normal_distribution<float> g;
  std::vector<float> rows(25 * 8);
  for (float& x : rows) x = g(rng);
  const EmbeddingMatrix m(8, rows);
  for (int trial = 0; trial < 50; ++trial) {
    Vector q1(8), q2(8), mix(8);
    const float a = g(rng);
    for (std::size_t k = 0; k < 8; ++k) {
      q1[k] = g(rng);
      q2[k] = g(rng);
      mix[k] = a * q1[k] + q2[k];
    }
    const auto s1 = score_history(m, q1), s2 = score_history(m, q2), sm = score_history(m, mix);
    for (std::size_t i = 0; i < sm.size(); ++i) {
      const double expect = a * s1[i] + s2[i];
      CHECK(std::abs(sm[i] - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("embed_query uses only the query text") {
  const TestEmbedder e(32);
  const auto q = embed_query(e, "where did we go");
  CHECK(q.vector == test_embed({"where did we go"}, 32)[0]);
}
