#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "axir/axioms.hpp"
#include "axir/model.hpp"
#include "axir/report.hpp"

namespace axir {

enum class Cohort { All, HasExistingOccurrence, NoExistingOccurrence };
std::string to_string(Cohort cohort);

struct AttentionStats {
  HookSite head;  // AttnPattern site
  TokenType from_type = TokenType::Inj;
  TokenType to_type = TokenType::Other;
  Cohort cohort = Cohort::All;
  double mean_attention = 0.0;
  std::size_t n_pairs = 0;  // source rows contributing
  std::size_t n_docs = 0;
};

struct AttentionOptions {
  TokenType from_type = TokenType::Inj;
  bool cohort_split = false;
  // Divide each row's destination-type mass by the number of destination
  // tokens of that type (mean per token) instead of reporting total mass.
  bool per_token = false;
  bool keep_contradictions = false;
  int threads = 0;
};

struct AttentionReport {
  std::vector<AttentionStats> stats;
  // Largest |Σ_type mass − 1| over every row of every head and document read.
  double max_row_sum_error = 0.0;
  std::size_t rows_checked = 0;
  std::size_t docs_used = 0;
  // Documents without any from_type position (skipped for every head).
  std::size_t docs_skipped = 0;
};

/// Reads AttnPattern rows of the perturbed run at from_type positions and
/// averages, per destination token type, the probability mass each row puts
/// on that type. Rows are pooled across documents; a destination column
/// only counts documents where that type occurs. `heads` may be HeadOut or
/// AttnPattern sites.
AttentionReport attention_by_type(const Model& model, const std::vector<DiagnosticTriple>& triples,
                                  const std::vector<HookSite>& heads,
                                  const AttentionOptions& options = {});

/// Rows "L.H" (suffixed with the cohort when split), columns the token types.
Matrix attention_matrix(const AttentionReport& report, const std::string& name);

std::string attention_csv(const AttentionReport& report);

struct SweepQuery {
  std::string qid;
  std::string text;
  std::string term;
  std::vector<std::string> docs;
};

struct PositionSweepPoint {
  double position = 0.0;
  double mean_score = 0.0;
  std::size_t n_docs = 0;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;  // documents over max_positions after injection
};

/// Per query: the seeded eligible term (as curation picks it, or `term`
/// when given) and the query's top `k_docs` candidates.
std::vector<SweepQuery> build_sweep_queries(const Tokenizer& tok,
                                            const std::vector<TextRecord>& corpus,
                                            const std::vector<TextRecord>& queries,
                                            const std::vector<RunEntry>& run, std::size_t k_docs,
                                            std::uint64_t seed, const std::string& filler,
                                            const std::optional<std::string>& term = {});

/// Scores each document with the query term injected at word index
/// round(f·n_words) for each grid point f; averages over a query's
/// documents, then over queries. Points come back sorted by position.
std::vector<PositionSweepPoint> position_sweep(const Model& model, const Tokenizer& tok,
                                               const std::vector<SweepQuery>& queries,
                                               std::vector<double> grid,
                                               const std::string& filler = "a", int threads = 0);

std::string sweep_csv(const std::vector<PositionSweepPoint>& points);

/// Run record: resolved config, seeds, git-style blob hashes of every input
/// and output file.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& resolved_config,
                             const std::map<std::string, std::filesystem::path>& inputs,
                             const std::vector<std::filesystem::path>& outputs,
                             const std::filesystem::path& out_dir);

}  // namespace axir
