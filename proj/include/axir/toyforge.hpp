#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "axir/container.hpp"
#include "axir/model.hpp"
#include "axir/tokenizer.hpp"

namespace axir {

/// Two-layer model with a hand-wired term-frequency circuit:
/// a duplicate-token head in layer 0 writes, at every topic-word position,
/// the attention mass landing on topic words into the relevance coordinate
/// r; an aggregator head in layer 1 averages coordinate r over all
/// positions into every row, including CLS. The query vector is e_r.
struct ToySpec {
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t d_ff = 4;
  std::size_t max_positions = 128;
  std::size_t dup_head = 2;         // layer 0
  std::size_t aggregator_head = 1;  // layer 1
  float alpha = 8.0f;               // Q = K = alpha on token coordinates
  float anchor = 10.0f;             // constant written to the anchor coordinate
  // Vocabulary words scored as relevant (weight 1); every other word has
  // weight 0. Special tokens are added in front.
  std::vector<std::string> topic_words;
  std::vector<std::string> background_words;

  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t relevance_coordinate() const { return d_model - 1; }
  std::size_t anchor_coordinate() const { return d_model - 2; }

  /// 20 topic words and the stopword list as background.
  static ToySpec standard();
};

struct ToyModel {
  ModelConfig config;
  WeightContainer weights;
  Vocab vocab;
};

/// Throws DataError for an infeasible spec and NumericError when the built
/// model fails its monotonicity self-check.
ToyModel build_duplicate_head_model(const ToySpec& spec = ToySpec::standard());

/// Vocabulary of the standard spec (specials, background, topic words).
Vocab toy_vocab(const ToySpec& spec = ToySpec::standard());

/// 2 layers, 2 heads, d_model 16 over the standard toy vocabulary.
ModelConfig toy_random_config();

/// Seeded Gaussian weights scaled by 1/√d_model; LayerNorm gammas near 1.
/// Deterministic for a given seed and standard library.
WeightContainer build_random_model(std::uint64_t seed, const ModelConfig& config);

}  // namespace axir
