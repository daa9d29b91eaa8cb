#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "axir/axioms.hpp"
#include "axir/model.hpp"
#include "axir/report.hpp"

namespace axir {

enum class SelectorKind { All, Positions, TokenType };

struct PositionSelector {
  SelectorKind kind = SelectorKind::All;
  std::vector<std::size_t> positions;
  TokenType type = TokenType::Other;

  static PositionSelector all() { return {}; }
  static PositionSelector at(std::vector<std::size_t> p) {
    return {SelectorKind::Positions, std::move(p), TokenType::Other};
  }
  static PositionSelector of_type(TokenType t) { return {SelectorKind::TokenType, {}, t}; }
};

enum class Granularity { PerSite, PerSiteAndType, PerSiteAndPosition };

struct PatchSpec {
  std::vector<HookSite> sites;
  PositionSelector selector;
  Granularity granularity = Granularity::PerSite;

  /// Every site of `kind` over all layers (and all heads for per-head kinds).
  static PatchSpec sweep(const ModelConfig& config, SiteKind kind,
                         Granularity granularity = Granularity::PerSite);
};

struct PatchFlags {
  bool direction_contradiction = false;
  bool degenerate_denominator = false;
};

struct PatchOutcome {
  std::string triple_id;
  HookSite site;
  std::string selector;                 // "all", "type:inj", "pos:4", "pos:1,2"
  std::optional<std::size_t> position;  // PerSiteAndPosition only
  std::optional<TokenType> token_type;  // label of the patched position(s)
  float s_low = 0.0f;
  float s_high = 0.0f;
  float s_patched = 0.0f;
  std::optional<float> ndiff;
  PatchFlags flags;
};

/// (s_patched − s_low)/(s_high − s_low), unclamped; nullopt when
/// |s_high − s_low| < 1e-6·max(1, |s_high|).
std::optional<float> normalized_difference(float s_patched, float s_low, float s_high);

struct RunOptions {
  int threads = 0;
  bool keep_contradictions = false;
  std::size_t chunk_triples = 16;
};

/// Scores and donor activations for one triple. The donor is the run with
/// the higher expected score, the recipient the other one.
struct PairedRuns {
  Tensor query_vec;
  const TokenizedText* recipient = nullptr;
  const TokenizedText* donor = nullptr;
  EncodeResult donor_run;
  float s_low = 0.0f;
  float s_high = 0.0f;
};

PairedRuns prepare_runs(const Model& model, const DiagnosticTriple& triple,
                        const RecordSet& donor_record);

/// Score of `ids` with `positions` of `site` overwritten from `donor`.
float patched_score(const Model& model, std::span<const int> ids, const Tensor& query_vec,
                    const HookSite& site, const std::vector<std::size_t>& positions,
                    const ActivationCache& donor);

/// Three-run patching for one triple: both documents are encoded, then the
/// recipient is re-encoded once per (site, selector) with donor rows
/// patched in.
std::vector<PatchOutcome> run_triple(const Model& model, const DiagnosticTriple& triple,
                                     const PatchSpec& spec);

/// run_triple over a dataset; (triple × site × selector) items run in
/// parallel. Output order is fixed (triple, then site, then selector), so
/// any thread count gives identical results.
std::vector<PatchOutcome> run_dataset(const Model& model,
                                      const std::vector<DiagnosticTriple>& triples,
                                      const PatchSpec& spec, const RunOptions& options = {});

/// Whether an outcome enters aggregate tables.
bool include_in_aggregate(const PatchOutcome& o, const RunOptions& options);

/// Per-position patching of `kind` (ResidPre, AttnOut, MlpOut, ...) on every
/// layer; mean ndiff per (layer, token type of the donor position). Columns
/// are the token types of the dataset's perturbation kind.
Matrix sweep_residual(const Model& model, const std::vector<DiagnosticTriple>& triples,
                      SiteKind kind = SiteKind::ResidPre, const RunOptions& options = {},
                      std::vector<PatchOutcome>* outcomes = nullptr);

/// HeadOut patching over all positions (or the given selector); mean ndiff
/// per (layer, head).
Matrix sweep_heads(const Model& model, const std::vector<DiagnosticTriple>& triples,
                   const RunOptions& options = {},
                   const PositionSelector& selector = PositionSelector::all(),
                   std::vector<PatchOutcome>* outcomes = nullptr);

/// Mean ndiff per (head, token type) from patching each listed head on all
/// positions of one donor token type at a time.
Matrix sweep_heads_by_type(const Model& model, const std::vector<DiagnosticTriple>& triples,
                           const std::vector<HookSite>& heads, const RunOptions& options = {});

/// Aggregates outcomes into a table. `row_of`/`col_of` return nullopt to drop.
Matrix aggregate(std::string name, std::vector<std::string> rows, std::vector<std::string> cols,
                 const std::vector<PatchOutcome>& outcomes, const RunOptions& options,
                 const std::function<std::optional<std::size_t>(const PatchOutcome&)>& row_of,
                 const std::function<std::optional<std::size_t>(const PatchOutcome&)>& col_of);

enum class AblationMode { Zero, Mean };
std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& text);

struct AblationTriple {
  std::string triple_id;
  float gap_before = 0.0f;  // s_high − s_low
  float gap_after = 0.0f;   // s_high(ablated) − s_low
};

struct HeadAblation {
  HookSite head;
  AblationMode mode = AblationMode::Zero;
  std::vector<AblationTriple> triples;
  double mean_gap_before = 0.0;
  double mean_gap_after = 0.0;
  // 1 − mean_gap_after/mean_gap_before; 1 means the gap vanished.
  double collapse_fraction = 0.0;
};

/// Replaces a head's output rows in the donor-condition run with zeros or
/// with the head's mean row over every (donor document, position) of the
/// same query, and reports the resulting change in s_high − s_low. The
/// collapse fraction exceeds 1 when the ablated donor scores below s_low.
std::vector<HeadAblation> ablate(const Model& model, const std::vector<DiagnosticTriple>& triples,
                                 const std::vector<HookSite>& heads, AblationMode mode,
                                 const RunOptions& options = {});

struct RelevanceSplit {
  std::vector<DiagnosticTriple> top;
  std::vector<DiagnosticTriple> bottom;
  std::vector<std::string> warnings;
};

/// Per query, ranks triples by unperturbed document score and keeps the top
/// and bottom ⌈fraction·K⌉ (at least one each).
RelevanceSplit split_by_relevance(const std::vector<DiagnosticTriple>& triples, double fraction);

nlohmann::json outcome_to_json(const PatchOutcome& o);

/// Parses "0.9,1.6" into HeadOut sites.
std::vector<HookSite> parse_heads(const std::string& text);

}  // namespace axir
