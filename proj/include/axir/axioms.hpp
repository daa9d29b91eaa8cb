#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "axir/model.hpp"
#include "axir/tokenizer.hpp"

namespace axir {

enum class PerturbationKind { TFC1_I, TFC1_R, TFC1_A };

enum class LocationKind { End, Begin, RandomPosition, NormalizedPosition };

struct Location {
  LocationKind kind = LocationKind::End;
  double fraction = 1.0;  // NormalizedPosition only, in [0, 1]

  static Location end() { return {LocationKind::End, 1.0}; }
  static Location begin() { return {LocationKind::Begin, 0.0}; }
  static Location random() { return {LocationKind::RandomPosition, 0.0}; }
  static Location at(double f) { return {LocationKind::NormalizedPosition, f}; }

  friend bool operator==(const Location&, const Location&) = default;
};

enum class ExpectedHigher { Perturbed, Baseline };

enum class TokenType { Cls, Inj, QtermPlus, QtermMinus, Other, Sep };
inline constexpr std::size_t kNumTokenTypes = 6;
inline constexpr TokenType kAllTokenTypes[kNumTokenTypes] = {
    TokenType::Cls, TokenType::Inj, TokenType::QtermPlus,
    TokenType::QtermMinus, TokenType::Other, TokenType::Sep};

std::string to_string(PerturbationKind kind);
std::string to_string(TokenType type);
std::string to_string(const Location& location);
std::string to_string(ExpectedHigher e);
PerturbationKind parse_kind(const std::string& text);
TokenType parse_token_type(const std::string& text);
Location parse_location(const std::string& text);
ExpectedHigher parse_expected_higher(const std::string& text);

/// Token types that can occur in the expected-higher document for a kind:
/// six for injection, five (no INJ) for replacement.
std::vector<TokenType> token_types_for(PerturbationKind kind);

/// Query-document-document pair built from one TFC1 perturbation. Baseline
/// and perturbed documents always have the same token count, so positions
/// align by identity between the paired runs.
struct DiagnosticTriple {
  std::string id;
  std::string qid;
  std::string docid;
  std::string query_text;
  TokenizedText query;
  TokenizedText baseline;
  TokenizedText perturbed;
  std::string selected_term;
  std::vector<int> selected_term_pieces;
  PerturbationKind kind = PerturbationKind::TFC1_I;
  Location location;
  ExpectedHigher expected_higher = ExpectedHigher::Perturbed;

  // Piece ranges [begin, end) of the injected term (in perturbed) and of the
  // filler pieces (in baseline for injection, in perturbed for replacement).
  std::vector<WordSpan> injected_spans;
  std::vector<WordSpan> filler_spans;

  std::vector<TokenType> types_baseline;
  std::vector<TokenType> types_perturbed;

  // Original document contained the selected term before perturbation.
  bool term_in_original = false;

  // Filled by curation.
  std::optional<int> candidate_rank;
  std::optional<float> doc_score;
  std::optional<float> s_baseline;
  std::optional<float> s_perturbed;
  bool direction_contradiction = false;
  std::uint64_t seed = 0;

  const TokenizedText& high_doc() const {
    return expected_higher == ExpectedHigher::Perturbed ? perturbed : baseline;
  }
  const TokenizedText& low_doc() const {
    return expected_higher == ExpectedHigher::Perturbed ? baseline : perturbed;
  }
  const std::vector<TokenType>& high_types() const {
    return expected_higher == ExpectedHigher::Perturbed ? types_perturbed : types_baseline;
  }
  const std::vector<TokenType>& low_types() const {
    return expected_higher == ExpectedHigher::Perturbed ? types_baseline : types_perturbed;
  }
};

/// Small English stopword list; these never become the selected term.
const std::set<std::string>& stopwords();

struct PerturbOptions {
  std::string filler = "a";
  std::size_t max_positions = 512;
  // Drives RandomPosition placement.
  std::uint64_t seed = 0;
};

/// Injects the selected term's pieces at `location` in the perturbed doc and
/// the same number of filler pieces at the same place in the baseline.
/// RandomPosition yields a TFC1-A triple, every other location TFC1-I.
DiagnosticTriple perturb_inject(const Tokenizer& tok, const std::string& query,
                                const std::string& doc, const std::string& selected_term,
                                const Location& location, const PerturbOptions& options = {});

/// Replaces every occurrence of the selected term with a piece-count-matched
/// run of filler; the original doc is the baseline. Throws
/// NotApplicableError when the term does not occur.
DiagnosticTriple perturb_replace(const Tokenizer& tok, const std::string& query,
                                 const std::string& doc, const std::string& selected_term,
                                 const PerturbOptions& options = {});

struct TokenLabels {
  std::vector<TokenType> baseline;
  std::vector<TokenType> perturbed;
};

TokenLabels label_token_types(const DiagnosticTriple& triple);

/// Word index a normalized position maps to: round(f · n_words).
std::size_t insertion_word_index(double fraction, std::size_t n_words);

// --- corpus / curation -----------------------------------------------------

struct TextRecord {
  std::string id;
  std::string text;

  bool operator==(const TextRecord&) const = default;
};

struct RunEntry {
  std::string qid;
  std::string docid;
  int rank = 0;
  double score = 0.0;
  std::string tag;
};

struct CurateOptions {
  PerturbationKind kind = PerturbationKind::TFC1_I;
  Location location = Location::end();
  std::size_t k_docs = 10;
  std::size_t n_queries = 16;
  std::uint64_t seed = 0;
  std::string filler = "a";
  int threads = 0;  // 0: resolve from environment
};

struct QuerySelection {
  std::string qid;
  std::string selected_term;
  double mean_abs_delta = 0.0;
  std::size_t n_triples = 0;
};

struct Dataset {
  std::vector<DiagnosticTriple> triples;
  std::vector<QuerySelection> kept;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

/// Seeded term selection per query, perturbation of its top-K candidates,
/// and retention of the N queries with the largest mean |Δscore|.
Dataset select_queries(const Model& model, const Tokenizer& tok,
                       const std::vector<TextRecord>& corpus,
                       const std::vector<TextRecord>& queries,
                       const std::vector<RunEntry>& candidates, const CurateOptions& options);

/// Query terms eligible for selection: non-stopword, non-filler words whose
/// pieces are all in-vocabulary.
std::vector<std::string> eligible_terms(const Tokenizer& tok, const std::string& query,
                                        const std::string& filler);

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_queries = 24;
  std::size_t n_docs_per_query = 10;
  int tf_min = 1;
  int tf_max = 3;
  std::size_t background_min = 12;
  std::size_t background_max = 24;
  std::string filler = "a";
};

struct SynthCorpus {
  std::vector<TextRecord> corpus;
  std::vector<TextRecord> queries;
  std::vector<RunEntry> run;
};

/// Query words come from the non-stopword content tokens of the vocabulary,
/// background words from its stopwords. Each query term occurs in each of
/// the query's documents a number of times drawn from [tf_min, tf_max].
SynthCorpus synth_corpus(const Vocab& vocab, const SynthOptions& options);

/// Seed for one named work item, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& key);

}  // namespace axir
