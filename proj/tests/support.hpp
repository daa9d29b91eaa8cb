#pragma once

// Shared fixtures: the wired toy model with a curated TFC1 dataset, and a
// small random model. Built once per process.

#include <filesystem>
#include <string>
#include <vector>

#include "axir/axioms.hpp"
#include "axir/model.hpp"
#include "axir/tokenizer.hpp"
#include "axir/toyforge.hpp"

namespace fixture {

struct Toy {
  axir::ToySpec spec;
  axir::ModelConfig config;
  axir::Model model;
  axir::Tokenizer tok;
  axir::SynthCorpus synth;
  axir::Dataset inject;   // TFC1-I at End, 16 queries × 10 docs
  axir::Dataset replace;  // TFC1-R, same corpus
};

inline axir::SynthOptions toy_synth_options() {
  axir::SynthOptions o;
  o.seed = 11;
  o.n_queries = 24;
  o.n_docs_per_query = 10;
  return o;
}

inline axir::Dataset curate(const axir::Model& model, const axir::Tokenizer& tok,
                            const axir::SynthCorpus& s, axir::PerturbationKind kind) {
  axir::CurateOptions c;
  c.kind = kind;
  c.location = axir::Location::end();
  c.k_docs = 10;
  c.n_queries = 16;
  c.seed = 5;
  return axir::select_queries(model, tok, s.corpus, s.queries, s.run, c);
}

inline const Toy& toy() {
  static const Toy t = [] {
    axir::ToyModel built = axir::build_duplicate_head_model();
    axir::Model model(built.config, std::move(built.weights));
    axir::Tokenizer tok(built.vocab, axir::TokenizerMode::Whitespace);
    axir::SynthCorpus synth = axir::synth_corpus(built.vocab, toy_synth_options());
    axir::Dataset inject = curate(model, tok, synth, axir::PerturbationKind::TFC1_I);
    axir::Dataset replace = curate(model, tok, synth, axir::PerturbationKind::TFC1_R);
    return Toy{axir::ToySpec::standard(), built.config, std::move(model), std::move(tok),
               std::move(synth), std::move(inject), std::move(replace)};
  }();
  return t;
}

struct Random {
  axir::ModelConfig config;
  axir::Model model;
  axir::Tokenizer tok;
  axir::SynthCorpus synth;
  axir::Dataset inject;
};

inline const Random& random_model() {
  static const Random r = [] {
    axir::ModelConfig config = axir::toy_random_config();
    axir::Model model(config, axir::build_random_model(3, config));
    axir::Tokenizer tok(axir::toy_vocab(), axir::TokenizerMode::Whitespace);
    axir::SynthOptions so = toy_synth_options();
    so.n_queries = 16;
    so.n_docs_per_query = 4;
    axir::SynthCorpus synth = axir::synth_corpus(tok.vocab(), so);
    axir::CurateOptions c;
    c.k_docs = 4;
    c.n_queries = 4;
    c.seed = 2;
    axir::Dataset inject = axir::select_queries(model, tok, synth.corpus, synth.queries,
                                                synth.run, c);
    return Random{config, std::move(model), std::move(tok), std::move(synth), std::move(inject)};
  }();
  return r;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("axir_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
