#include "axir/patching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "axir/error.hpp"
#include "axir/parallel.hpp"

namespace axir {

namespace {

struct WorkItem {
  std::size_t triple = 0;
  HookSite site;
  std::vector<std::size_t> positions;
  std::string selector;
  std::optional<std::size_t> position;
  std::optional<TokenType> type;
};

std::string positions_str(const std::vector<std::size_t>& positions) {
  std::string s = "pos:";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(positions[i]);
  }
  return s;
}

std::vector<std::size_t> base_positions(const DiagnosticTriple& t, const PositionSelector& sel) {
  const auto& labels = t.high_types();
  const std::size_t n = t.low_doc().size();
  std::vector<std::size_t> out;
  switch (sel.kind) {
    case SelectorKind::All:
      out.resize(n);
      std::iota(out.begin(), out.end(), 0);
      break;
    case SelectorKind::Positions:
      for (std::size_t p : sel.positions) {
        if (p >= n) {
          throw PatchError("triple " + t.id + ": position " + std::to_string(p) +
                           " outside document of " + std::to_string(n));
        }
      }
      out = sel.positions;
      break;
    case SelectorKind::TokenType:
      for (std::size_t p = 0; p < n; ++p)
        if (labels[p] == sel.type) out.push_back(p);
      break;
  }
  return out;
}

std::vector<WorkItem> enumerate(const DiagnosticTriple& t, std::size_t index,
                                const PatchSpec& spec) {
  const auto& labels = t.high_types();
  const std::vector<std::size_t> base = base_positions(t, spec.selector);
  std::vector<WorkItem> items;
  for (const HookSite& site : spec.sites) {
    switch (spec.granularity) {
      case Granularity::PerSite: {
        if (base.empty()) break;
        WorkItem w{index, site, base, "all", {}, {}};
        if (spec.selector.kind == SelectorKind::TokenType) {
          w.selector = "type:" + to_string(spec.selector.type);
          w.type = spec.selector.type;
        } else if (spec.selector.kind == SelectorKind::Positions) {
          w.selector = positions_str(base);
          if (base.size() == 1) w.type = labels[base[0]];
        }
        items.push_back(std::move(w));
        break;
      }
      case Granularity::PerSiteAndType:
        for (TokenType type : kAllTokenTypes) {
          std::vector<std::size_t> ps;
          for (std::size_t p : base)
            if (labels[p] == type) ps.push_back(p);
          if (ps.empty()) continue;
          items.push_back({index, site, std::move(ps), "type:" + to_string(type), {}, type});
        }
        break;
      case Granularity::PerSiteAndPosition:
        for (std::size_t p : base) {
          items.push_back({index, site, {p}, "pos:" + std::to_string(p), p, labels[p]});
        }
        break;
    }
  }
  return items;
}

double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

PatchSpec PatchSpec::sweep(const ModelConfig& config, SiteKind kind, Granularity granularity) {
  PatchSpec spec;
  spec.granularity = granularity;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    if (kind == SiteKind::HeadOut || kind == SiteKind::AttnPattern) {
      for (std::size_t h = 0; h < config.n_heads; ++h) spec.sites.push_back({kind, l, h});
    } else {
      spec.sites.push_back({kind, l, {}});
    }
  }
  return spec;
}

std::optional<float> normalized_difference(float s_patched, float s_low, float s_high) {
  const double denom = static_cast<double>(s_high) - s_low;
  const double eps = 1e-6 * std::max(1.0, std::abs(static_cast<double>(s_high)));
  if (std::abs(denom) < eps) return std::nullopt;
  return static_cast<float>((static_cast<double>(s_patched) - s_low) / denom);
}

PairedRuns prepare_runs(const Model& model, const DiagnosticTriple& t,
                        const RecordSet& donor_record) {
  if (t.baseline.size() != t.perturbed.size()) {
    throw DataError("triple " + t.id + ": baseline and perturbed lengths differ (" +
                    std::to_string(t.baseline.size()) + " vs " +
                    std::to_string(t.perturbed.size()) + ")");
  }
  if (t.types_baseline.size() != t.baseline.size() ||
      t.types_perturbed.size() != t.perturbed.size()) {
    throw DataError("triple " + t.id + ": labels do not cover the documents");
  }
  PairedRuns r;
  r.query_vec = model.encode_query(t.query.ids);
  r.donor = &t.high_doc();
  r.recipient = &t.low_doc();
  r.donor_run = model.encode(r.donor->ids, donor_record);
  r.s_high = score(r.query_vec, r.donor_run.cls);
  r.s_low = score(r.query_vec, model.encode(r.recipient->ids, RecordSet::none()).cls);
  return r;
}

float patched_score(const Model& model, std::span<const int> ids, const Tensor& query_vec,
                    const HookSite& site, const std::vector<std::size_t>& positions,
                    const ActivationCache& donor) {
  if (donor.seq_len() != ids.size()) {
    throw PatchError("donor length " + std::to_string(donor.seq_len()) +
                     " != recipient length " + std::to_string(ids.size()));
  }
  const Patch patch{site, positions, donor.at(site)};
  return score(query_vec, model.encode_with_patches(ids, std::span(&patch, 1)).cls);
}

std::vector<PatchOutcome> run_triple(const Model& model, const DiagnosticTriple& triple,
                                     const PatchSpec& spec) {
  RunOptions options;
  options.threads = 1;
  return run_dataset(model, {triple}, spec, options);
}

std::vector<PatchOutcome> run_dataset(const Model& model,
                                      const std::vector<DiagnosticTriple>& triples,
                                      const PatchSpec& spec, const RunOptions& options) {
  for (const auto& site : spec.sites) site.validate(model.config());
  const int threads = resolve_threads(options.threads);
  const RecordSet donor_record =
      RecordSet::only(std::set<HookSite>(spec.sites.begin(), spec.sites.end()));
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_triples);

  std::vector<PatchOutcome> outcomes;
  for (std::size_t start = 0; start < triples.size(); start += chunk) {
    const std::size_t end = std::min(triples.size(), start + chunk);
    std::vector<PairedRuns> runs(end - start);
    parallel_for(runs.size(), threads, [&](std::size_t i) {
      runs[i] = prepare_runs(model, triples[start + i], donor_record);
    });

    std::vector<WorkItem> items;
    for (std::size_t i = start; i < end; ++i) {
      auto more = enumerate(triples[i], i - start, spec);
      std::move(more.begin(), more.end(), std::back_inserter(items));
    }

    std::vector<PatchOutcome> results(items.size());
    parallel_for(items.size(), threads, [&](std::size_t k) {
      const WorkItem& w = items[k];
      const PairedRuns& r = runs[w.triple];
      PatchOutcome& o = results[k];
      o.triple_id = triples[start + w.triple].id;
      o.site = w.site;
      o.selector = w.selector;
      o.position = w.position;
      o.token_type = w.type;
      o.s_low = r.s_low;
      o.s_high = r.s_high;
      o.s_patched = patched_score(model, r.recipient->ids, r.query_vec, w.site, w.positions,
                                  r.donor_run.cache);
      o.ndiff = normalized_difference(o.s_patched, o.s_low, o.s_high);
      o.flags.degenerate_denominator = !o.ndiff.has_value();
      o.flags.direction_contradiction = r.s_high < r.s_low;
    });
    std::move(results.begin(), results.end(), std::back_inserter(outcomes));
  }
  return outcomes;
}

bool include_in_aggregate(const PatchOutcome& o, const RunOptions& options) {
  if (!o.ndiff) return false;
  return options.keep_contradictions || !o.flags.direction_contradiction;
}

Matrix aggregate(std::string name, std::vector<std::string> rows, std::vector<std::string> cols,
                 const std::vector<PatchOutcome>& outcomes, const RunOptions& options,
                 const std::function<std::optional<std::size_t>(const PatchOutcome&)>& row_of,
                 const std::function<std::optional<std::size_t>(const PatchOutcome&)>& col_of) {
  Matrix m(std::move(name), std::move(rows), std::move(cols));
  std::vector<std::vector<double>> cells(m.values.size());
  for (const auto& o : outcomes) {
    if (!include_in_aggregate(o, options)) continue;
    const auto r = row_of(o);
    const auto c = col_of(o);
    if (!r || !c) continue;
    cells[*r * m.n_cols() + *c].push_back(*o.ndiff);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    m.counts[i] = cells[i].size();
    if (!cells[i].empty())
      m.values[i] = sorted_sum(cells[i]) / static_cast<double>(cells[i].size());
  }
  return m;
}

namespace {

std::vector<std::string> layer_labels(const ModelConfig& c) {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < c.n_layers; ++l) out.push_back(std::to_string(l));
  return out;
}

PerturbationKind dataset_kind(const std::vector<DiagnosticTriple>& triples) {
  if (triples.empty()) throw NumericError("empty dataset");
  const PerturbationKind kind = triples.front().kind;
  for (const auto& t : triples) {
    if ((t.kind == PerturbationKind::TFC1_R) != (kind == PerturbationKind::TFC1_R)) {
      throw DataError("dataset mixes injection and replacement triples");
    }
  }
  return kind;
}

void require_some(const Matrix& m) {
  if (std::none_of(m.values.begin(), m.values.end(), [](const auto& v) { return v.has_value(); })) {
    throw NumericError(m.name + ": every outcome was degenerate or filtered");
  }
}

}  // namespace

Matrix sweep_residual(const Model& model, const std::vector<DiagnosticTriple>& triples,
                      SiteKind kind, const RunOptions& options,
                      std::vector<PatchOutcome>* outcomes) {
  if (kind == SiteKind::HeadOut || kind == SiteKind::AttnPattern) {
    throw DataError("sweep_residual takes a residual-width, whole-layer site kind");
  }
  const auto types = token_types_for(dataset_kind(triples));
  const PatchSpec spec = PatchSpec::sweep(model.config(), kind, Granularity::PerSiteAndPosition);
  auto results = run_dataset(model, triples, spec, options);
  std::vector<std::string> cols;
  for (auto t : types) cols.push_back(to_string(t));
  Matrix m = aggregate(
      to_string(kind) + "_by_type", layer_labels(model.config()), cols, results, options,
      [](const PatchOutcome& o) { return std::optional<std::size_t>(o.site.layer); },
      [&](const PatchOutcome& o) -> std::optional<std::size_t> {
        auto it = std::find(types.begin(), types.end(), *o.token_type);
        if (it == types.end()) return std::nullopt;
        return static_cast<std::size_t>(it - types.begin());
      });
  require_some(m);
  if (outcomes) *outcomes = std::move(results);
  return m;
}

Matrix sweep_heads(const Model& model, const std::vector<DiagnosticTriple>& triples,
                   const RunOptions& options, const PositionSelector& selector,
                   std::vector<PatchOutcome>* outcomes) {
  dataset_kind(triples);
  PatchSpec spec = PatchSpec::sweep(model.config(), SiteKind::HeadOut);
  spec.selector = selector;
  auto results = run_dataset(model, triples, spec, options);
  std::vector<std::string> cols;
  for (std::size_t h = 0; h < model.config().n_heads; ++h) cols.push_back(std::to_string(h));
  Matrix m = aggregate(
      "head_out", layer_labels(model.config()), cols, results, options,
      [](const PatchOutcome& o) { return std::optional<std::size_t>(o.site.layer); },
      [](const PatchOutcome& o) { return std::optional<std::size_t>(*o.site.head); });
  require_some(m);
  if (outcomes) *outcomes = std::move(results);
  return m;
}

Matrix sweep_heads_by_type(const Model& model, const std::vector<DiagnosticTriple>& triples,
                           const std::vector<HookSite>& heads, const RunOptions& options) {
  const auto types = token_types_for(dataset_kind(triples));
  PatchSpec spec;
  spec.sites = heads;
  spec.granularity = Granularity::PerSiteAndType;
  auto results = run_dataset(model, triples, spec, options);
  std::vector<std::string> rows, cols;
  for (const auto& h : heads)
    rows.push_back(std::to_string(h.layer) + "." + std::to_string(*h.head));
  for (auto t : types) cols.push_back(to_string(t));
  return aggregate(
      "head_out_by_type", rows, cols, results, options,
      [&](const PatchOutcome& o) -> std::optional<std::size_t> {
        auto it = std::find(heads.begin(), heads.end(), o.site);
        return static_cast<std::size_t>(it - heads.begin());
      },
      [&](const PatchOutcome& o) -> std::optional<std::size_t> {
        auto it = std::find(types.begin(), types.end(), *o.token_type);
        if (it == types.end()) return std::nullopt;
        return static_cast<std::size_t>(it - types.begin());
      });
}

// --- ablation ----------------------------------------------------------------

std::string to_string(AblationMode mode) { return mode == AblationMode::Zero ? "zero" : "mean"; }

AblationMode parse_ablation_mode(const std::string& text) {
  if (text == "zero") return AblationMode::Zero;
  if (text == "mean") return AblationMode::Mean;
  throw DataError("unknown ablation mode: " + text);
}

std::vector<HeadAblation> ablate(const Model& model, const std::vector<DiagnosticTriple>& triples,
                                 const std::vector<HookSite>& heads, AblationMode mode,
                                 const RunOptions& options) {
  for (const auto& h : heads) {
    if (h.kind != SiteKind::HeadOut) throw DataError("ablate: " + h.str() + " is not a head");
    h.validate(model.config());
  }
  if (triples.empty()) throw NumericError("ablate: empty dataset");
  const int threads = resolve_threads(options.threads);
  const std::size_t d = model.config().d_model;

  std::vector<PairedRuns> runs(triples.size());
  const RecordSet record = mode == AblationMode::Mean
                               ? RecordSet::only(std::set<HookSite>(heads.begin(), heads.end()))
                               : RecordSet::none();
  parallel_for(triples.size(), threads,
               [&](std::size_t i) { runs[i] = prepare_runs(model, triples[i], record); });

  // Mean head rows per (query, head) over every donor document and position.
  std::map<std::pair<std::string, HookSite>, Tensor> means;
  if (mode == AblationMode::Mean) {
    std::map<std::string, std::size_t> docs_per_query;
    for (const auto& t : triples) ++docs_per_query[t.qid];
    for (const auto& [qid, n] : docs_per_query) {
      if (n < 2) {
        throw DataError("mean ablation needs >= 2 documents per query; query " + qid +
                        " has " + std::to_string(n));
      }
    }
    for (const auto& h : heads) {
      std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
      for (std::size_t i = 0; i < triples.size(); ++i) {
        auto& [sum, count] = sums[triples[i].qid];
        sum.resize(d, 0.0);
        const Tensor& rows = runs[i].donor_run.cache.at(h);
        for (std::size_t p = 0; p < rows.rows(); ++p) {
          auto r = rows.row(p);
          for (std::size_t j = 0; j < d; ++j) sum[j] += r[j];
        }
        count += rows.rows();
      }
      for (const auto& [qid, sc] : sums) {
        Tensor mean({d});
        for (std::size_t j = 0; j < d; ++j)
          mean.data()[j] = static_cast<float>(sc.first[j] / static_cast<double>(sc.second));
        means.emplace(std::make_pair(qid, h), std::move(mean));
      }
    }
  }

  std::vector<HeadAblation> report;
  for (const auto& h : heads) {
    HeadAblation ha;
    ha.head = h;
    ha.mode = mode;
    std::vector<float> after(triples.size());
    parallel_for(triples.size(), threads, [&](std::size_t i) {
      const auto& ids = runs[i].donor->ids;
      const std::size_t n = ids.size();
      Tensor rows({n, d});
      if (mode == AblationMode::Mean) {
        const Tensor& mean = means.at({triples[i].qid, h});
        for (std::size_t p = 0; p < n; ++p)
          std::copy(mean.data().begin(), mean.data().end(), rows.row(p).begin());
      }
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      const Patch patch{h, std::move(all), std::move(rows)};
      after[i] = score(runs[i].query_vec,
                       model.encode_with_patches(ids, std::span(&patch, 1)).cls);
    });
    std::vector<double> before_vals, after_vals;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const PairedRuns& r = runs[i];
      if (r.s_high < r.s_low && !options.keep_contradictions) continue;
      AblationTriple at{triples[i].id, r.s_high - r.s_low, after[i] - r.s_low};
      before_vals.push_back(at.gap_before);
      after_vals.push_back(at.gap_after);
      ha.triples.push_back(at);
    }
    if (ha.triples.empty()) throw NumericError("ablate: every triple was filtered");
    const double n = static_cast<double>(ha.triples.size());
    ha.mean_gap_before = sorted_sum(before_vals) / n;
    ha.mean_gap_after = sorted_sum(after_vals) / n;
    if (ha.mean_gap_before == 0.0) throw NumericError("ablate: mean score gap is zero");
    ha.collapse_fraction = 1.0 - ha.mean_gap_after / ha.mean_gap_before;
    report.push_back(std::move(ha));
  }
  return report;
}

// --- relevance split ---------------------------------------------------------

RelevanceSplit split_by_relevance(const std::vector<DiagnosticTriple>& triples, double fraction) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw DataError("relevance split fraction must be in (0, 0.5]");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<const DiagnosticTriple*>> groups;
  for (const auto& t : triples) {
    if (!t.doc_score) throw DataError("triple " + t.id + ": no unperturbed document score");
    if (!groups.contains(t.qid)) order.push_back(t.qid);
    groups[t.qid].push_back(&t);
  }
  RelevanceSplit out;
  for (const auto& qid : order) {
    auto& g = groups[qid];
    std::stable_sort(g.begin(), g.end(), [](const DiagnosticTriple* a, const DiagnosticTriple* b) {
      return *a->doc_score > *b->doc_score;
    });
    const double want = fraction * static_cast<double>(g.size());
    std::size_t k = static_cast<std::size_t>(std::ceil(want - 1e-9));
    if (want < 1.0) {
      out.warnings.push_back("query " + qid + ": " + std::to_string(g.size()) +
                             " documents x fraction < 1, keeping one per side");
      k = 1;
    }
    k = std::min(k, g.size());
    for (std::size_t i = 0; i < k; ++i) out.top.push_back(*g[i]);
    for (std::size_t i = g.size() - k; i < g.size(); ++i) out.bottom.push_back(*g[i]);
  }
  return out;
}

nlohmann::json outcome_to_json(const PatchOutcome& o) {
  nlohmann::json j;
  j["triple_id"] = o.triple_id;
  j["site"] = o.site.str();
  j["selector"] = o.selector;
  j["position"] = o.position ? nlohmann::json(*o.position) : nlohmann::json(nullptr);
  j["token_type"] =
      o.token_type ? nlohmann::json(to_string(*o.token_type)) : nlohmann::json(nullptr);
  j["s_low"] = o.s_low;
  j["s_high"] = o.s_high;
  j["s_patched"] = o.s_patched;
  j["ndiff"] = o.ndiff ? nlohmann::json(*o.ndiff) : nlohmann::json(nullptr);
  j["flags"] = {{"direction_contradiction", o.flags.direction_contradiction},
                {"degenerate_denominator", o.flags.degenerate_denominator}};
  return j;
}

std::vector<HookSite> parse_heads(const std::string& text) {
  std::vector<HookSite> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto dot = item.find('.');
    if (dot == std::string::npos) throw DataError("bad head '" + item + "', expected L.H");
    try {
      out.push_back(HookSite::head_out(std::stoul(item.substr(0, dot)),
                                       std::stoul(item.substr(dot + 1))));
    } catch (const std::logic_error&) {
      throw DataError("bad head '" + item + "', expected L.H");
    }
  }
  if (out.empty()) throw DataError("no heads given");
  return out;
}

}  // namespace axir
