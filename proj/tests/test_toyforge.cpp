#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "axir/error.hpp"
#include "axir/toyforge.hpp"
#include "support.hpp"

using namespace axir;

namespace {

float doc_score(const Model& m, const Tokenizer& tok, const std::vector<std::string>& words) {
  return score(m.encode_query({}), m.encode(tok.from_words(words).ids, RecordSet::none()).cls);
}

}  // namespace

TEST_SUITE("toyforge") {

TEST_CASE("score is non-decreasing in term count at fixed length") {
  const auto& toy = fixture::toy();
  for (const auto& term : toy.spec.topic_words) {
    for (std::size_t len : {8u, 20u}) {
      std::vector<std::string> words(len, "the");
      float prev = doc_score(toy.model, toy.tok, words);
      CHECK(std::abs(prev) <= 1e-3f);
      for (std::size_t k = 1; k <= 4; ++k) {
        words[k * 2 - 1] = term;
        const float s = doc_score(toy.model, toy.tok, words);
        CHECK(s >= prev);
        prev = s;
      }
    }
  }
}

TEST_CASE("query vector is the relevance coordinate") {
  const auto& toy = fixture::toy();
  const Tensor q = toy.model.encode_query({});
  CHECK(q.values()[toy.spec.relevance_coordinate()] == 1.0f);
  CHECK(toy.config.fixed_query_coordinate == toy.spec.relevance_coordinate());
}

TEST_CASE("unwired heads and both MLPs are zero") {
  const auto& toy = fixture::toy();
  const WeightContainer& w = toy.model.weights();
  for (const char* name : {"layer.0.mlp.w1.weight", "layer.0.mlp.w2.weight",
                           "layer.1.mlp.w1.weight", "layer.1.mlp.w2.weight",
                           "position_embedding"}) {
    for (float v : w.get(name).values()) REQUIRE(v == 0.0f);
  }
  const std::size_t dh = toy.spec.d_head();
  const Tensor& wo0 = w.get("layer.0.attn.o.weight");
  for (std::size_t h = 0; h < toy.spec.n_heads; ++h) {
    if (h == toy.spec.dup_head) continue;
    for (std::size_t r = h * dh; r < (h + 1) * dh; ++r)
      for (float v : wo0.row(r)) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("infeasible specs are rejected") {
  ToySpec s = ToySpec::standard();
  s.d_model = 64;  // d_head 16 < vocabulary
  CHECK_THROWS_AS(build_duplicate_head_model(s), DataError);
  s = ToySpec::standard();
  s.dup_head = 4;
  CHECK_THROWS_AS(build_duplicate_head_model(s), DataError);
  s = ToySpec::standard();
  s.alpha = 0.0f;
  CHECK_THROWS_AS(build_duplicate_head_model(s), DataError);
  s = ToySpec::standard();
  s.background_words = {"the", "of"};
  CHECK_THROWS_AS(build_duplicate_head_model(s), DataError);
}

TEST_CASE("the build-time self-check fails loudly when the wiring breaks") {
  ToySpec s = ToySpec::standard();
  s.anchor = 1e8f;  // float rounding swamps the one-hot token coordinates
  bool threw_numeric = false;
  try {
    (void)build_duplicate_head_model(s);
  } catch (const NumericError&) {
    threw_numeric = true;
  }
  CHECK(threw_numeric);
}

TEST_CASE("different dup head positions") {
  ToySpec s = ToySpec::standard();
  s.dup_head = 0;
  s.aggregator_head = 3;
  const ToyModel t = build_duplicate_head_model(s);
  CHECK(t.config.n_layers == 2);
  CHECK(t.vocab.size() == 60);
}

TEST_CASE("random models") {
  const ModelConfig c = toy_random_config();
  const Model a(c, build_random_model(1, c));
  const Model b(c, build_random_model(2, c));
  const std::vector<int> q = {2, 45, 46, 3};
  const std::vector<int> d = {2, 10, 45, 11, 3};
  CHECK(score(a.encode_query(q), a.encode(d, RecordSet::none()).cls) !=
        score(b.encode_query(q), b.encode(d, RecordSet::none()).cls));
}

}  // TEST_SUITE
