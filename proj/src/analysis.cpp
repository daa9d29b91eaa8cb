#include "axir/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "axir/content_hash.hpp"
#include "axir/error.hpp"
#include "axir/parallel.hpp"

namespace axir {

std::string to_string(Cohort cohort) {
  switch (cohort) {
    case Cohort::All: return "all";
    case Cohort::HasExistingOccurrence: return "has_existing";
    case Cohort::NoExistingOccurrence: return "no_existing";
  }
  return "";
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sorted_mean(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::size_t type_index(TokenType t) {
  return static_cast<std::size_t>(
      std::find(std::begin(kAllTokenTypes), std::end(kAllTokenTypes), t) -
      std::begin(kAllTokenTypes));
}

// Per-document contribution: rows[head][to_type] holds one value per source row.
struct DocAttention {
  bool used = false;
  Cohort cohort = Cohort::All;
  std::vector<std::array<std::vector<double>, kNumTokenTypes>> rows;
  double max_err = 0.0;
  std::size_t rows_checked = 0;
};

}  // namespace

AttentionReport attention_by_type(const Model& model, const std::vector<DiagnosticTriple>& triples,
                                  const std::vector<HookSite>& heads,
                                  const AttentionOptions& options) {
  std::vector<HookSite> sites;
  for (const auto& h : heads) {
    if (!h.per_head()) throw DataError("attention_by_type: " + h.str() + " is not a head");
    HookSite s = HookSite::attn_pattern(h.layer, *h.head);
    s.validate(model.config());
    sites.push_back(s);
  }
  if (sites.empty()) throw DataError("attention_by_type: no heads");
  const RecordSet record = RecordSet::only(std::set<HookSite>(sites.begin(), sites.end()));

  std::vector<DocAttention> docs(triples.size());
  parallel_for(triples.size(), resolve_threads(options.threads), [&](std::size_t i) {
    const DiagnosticTriple& t = triples[i];
    DocAttention& out = docs[i];
    if (t.direction_contradiction && !options.keep_contradictions) return;
    const auto& labels = t.types_perturbed;
    std::vector<std::size_t> from;
    std::array<std::size_t, kNumTokenTypes> type_count{};
    for (std::size_t p = 0; p < labels.size(); ++p) {
      ++type_count[type_index(labels[p])];
      if (labels[p] == options.from_type) from.push_back(p);
    }
    if (from.empty()) return;
    out.used = true;
    out.cohort = !options.cohort_split ? Cohort::All
                 : t.term_in_original  ? Cohort::HasExistingOccurrence
                                       : Cohort::NoExistingOccurrence;
    const auto run = model.encode(t.perturbed.ids, record);
    out.rows.resize(sites.size());
    for (std::size_t h = 0; h < sites.size(); ++h) {
      const Tensor& pattern = run.cache.at(sites[h]);
      for (std::size_t p = 0; p < pattern.rows(); ++p) {
        std::array<double, kNumTokenTypes> mass{};
        auto row = pattern.row(p);
        for (std::size_t q = 0; q < row.size(); ++q) mass[type_index(labels[q])] += row[q];
        double total = 0.0;
        for (double m : mass) total += m;
        out.max_err = std::max(out.max_err, std::abs(total - 1.0));
        ++out.rows_checked;
        if (labels[p] != options.from_type) continue;
        for (std::size_t k = 0; k < kNumTokenTypes; ++k) {
          if (type_count[k] == 0) continue;
          const double v =
              options.per_token ? mass[k] / static_cast<double>(type_count[k]) : mass[k];
          out.rows[h][k].push_back(v);
        }
      }
    }
  });

  AttentionReport report;
  std::vector<Cohort> cohorts = options.cohort_split
                                    ? std::vector<Cohort>{Cohort::HasExistingOccurrence,
                                                          Cohort::NoExistingOccurrence}
                                    : std::vector<Cohort>{Cohort::All};
  for (const auto& d : docs) {
    if (d.used) {
      ++report.docs_used;
      report.max_row_sum_error = std::max(report.max_row_sum_error, d.max_err);
      report.rows_checked += d.rows_checked;
    } else {
      ++report.docs_skipped;
    }
  }
  for (std::size_t h = 0; h < sites.size(); ++h) {
    for (Cohort c : cohorts) {
      for (std::size_t k = 0; k < kNumTokenTypes; ++k) {
        std::vector<double> values;
        std::size_t n_docs = 0;
        for (const auto& d : docs) {
          if (!d.used || d.cohort != c || d.rows[h][k].empty()) continue;
          values.insert(values.end(), d.rows[h][k].begin(), d.rows[h][k].end());
          ++n_docs;
        }
        if (values.empty()) continue;
        AttentionStats s;
        s.head = sites[h];
        s.from_type = options.from_type;
        s.to_type = kAllTokenTypes[k];
        s.cohort = c;
        s.n_pairs = values.size();
        s.n_docs = n_docs;
        s.mean_attention = sorted_mean(values);
        report.stats.push_back(s);
      }
    }
  }
  return report;
}

Matrix attention_matrix(const AttentionReport& report, const std::string& name) {
  std::vector<std::string> rows;
  std::vector<std::pair<HookSite, Cohort>> keys;
  for (const auto& s : report.stats) {
    const std::pair key{s.head, s.cohort};
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
    keys.push_back(key);
    std::string label = std::to_string(s.head.layer) + "." + std::to_string(*s.head.head);
    if (s.cohort != Cohort::All) label += " " + to_string(s.cohort);
    rows.push_back(label);
  }
  std::vector<std::string> cols;
  for (auto t : kAllTokenTypes) cols.push_back(to_string(t));
  Matrix m(name, rows, cols);
  for (const auto& s : report.stats) {
    const auto r = static_cast<std::size_t>(
        std::find(keys.begin(), keys.end(), std::pair{s.head, s.cohort}) - keys.begin());
    m.value(r, type_index(s.to_type)) = s.mean_attention;
    m.count(r, type_index(s.to_type)) = s.n_pairs;
  }
  return m;
}

std::string attention_csv(const AttentionReport& report) {
  std::string s = "head,from_type,to_type,cohort,mean_attention,n_pairs,n_docs\n";
  for (const auto& a : report.stats) {
    s += std::to_string(a.head.layer) + "." + std::to_string(*a.head.head) + "," +
         to_string(a.from_type) + "," + to_string(a.to_type) + "," + to_string(a.cohort) + "," +
         fmt17(a.mean_attention) + "," + std::to_string(a.n_pairs) + "," +
         std::to_string(a.n_docs) + "\n";
  }
  return s;
}

std::vector<SweepQuery> build_sweep_queries(const Tokenizer& tok,
                                            const std::vector<TextRecord>& corpus,
                                            const std::vector<TextRecord>& queries,
                                            const std::vector<RunEntry>& run, std::size_t k_docs,
                                            std::uint64_t seed, const std::string& filler,
                                            const std::optional<std::string>& term) {
  std::map<std::string, const std::string*> docs;
  for (const auto& d : corpus) docs[d.id] = &d.text;
  std::map<std::string, std::vector<const RunEntry*>> by_query;
  for (const auto& e : run) by_query[e.qid].push_back(&e);
  std::vector<SweepQuery> out;
  for (const auto& q : queries) {
    auto it = by_query.find(q.id);
    if (it == by_query.end()) continue;
    auto list = it->second;
    std::stable_sort(list.begin(), list.end(),
                     [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
    SweepQuery sq{q.id, q.text, "", {}};
    if (term) {
      sq.term = *term;
    } else {
      const auto terms = eligible_terms(tok, q.text, filler);
      if (terms.empty()) continue;
      std::mt19937_64 rng(derive_seed(seed, q.id));
      sq.term = terms[rng() % terms.size()];
    }
    for (const RunEntry* e : list) {
      if (sq.docs.size() == k_docs) break;
      auto d = docs.find(e->docid);
      if (d != docs.end()) sq.docs.push_back(*d->second);
    }
    if (!sq.docs.empty()) out.push_back(std::move(sq));
  }
  return out;
}

std::vector<PositionSweepPoint> position_sweep(const Model& model, const Tokenizer& tok,
                                               const std::vector<SweepQuery>& queries,
                                               std::vector<double> grid,
                                               const std::string& filler, int threads) {
  if (grid.empty()) throw DataError("position sweep: empty grid");
  for (double f : grid) {
    if (!(f >= 0.0 && f <= 1.0)) throw DataError("position sweep: grid point outside [0, 1]");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  struct Cell {
    std::vector<double> scores;
    std::size_t skipped = 0;
  };
  // cells[query][grid point]
  std::vector<std::vector<Cell>> cells(queries.size(), std::vector<Cell>(grid.size()));
  PerturbOptions popts;
  popts.filler = filler;
  popts.max_positions = model.config().max_positions;
  parallel_for(queries.size(), resolve_threads(threads), [&](std::size_t qi) {
    const SweepQuery& q = queries[qi];
    const Tensor qvec = model.encode_query(tok.tokenize(q.text).ids);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (const auto& doc : q.docs) {
        try {
          const auto t = perturb_inject(tok, q.text, doc, q.term, Location::at(grid[g]), popts);
          cells[qi][g].scores.push_back(
              score(qvec, model.encode(t.perturbed.ids, RecordSet::none()).cls));
        } catch (const SequenceError&) {
          ++cells[qi][g].skipped;
        }
      }
    }
  });

  std::vector<PositionSweepPoint> points;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    PositionSweepPoint p;
    p.position = grid[g];
    std::vector<double> per_query;
    for (auto& row : cells) {
      Cell& c = row[g];
      p.n_skipped += c.skipped;
      if (c.scores.empty()) continue;
      p.n_docs += c.scores.size();
      per_query.push_back(sorted_mean(c.scores));
    }
    p.n_queries = per_query.size();
    if (!per_query.empty()) p.mean_score = sorted_mean(per_query);
    points.push_back(p);
  }
  if (std::all_of(points.begin(), points.end(), [](const auto& p) { return p.n_queries == 0; })) {
    throw NumericError("position sweep: no document could be scored");
  }
  return points;
}

std::string sweep_csv(const std::vector<PositionSweepPoint>& points) {
  std::string s = "position,mean_score,n_docs,n_queries,n_skipped\n";
  for (const auto& p : points) {
    s += fmt17(p.position) + "," + (p.n_queries ? fmt17(p.mean_score) : std::string()) + "," +
         std::to_string(p.n_docs) + "," + std::to_string(p.n_queries) + "," +
         std::to_string(p.n_skipped) + "\n";
  }
  return s;
}

nlohmann::json make_manifest(const std::string& command, const nlohmann::json& resolved_config,
                             const std::map<std::string, std::filesystem::path>& inputs,
                             const std::vector<std::filesystem::path>& outputs,
                             const std::filesystem::path& out_dir) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = resolved_config;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [role, path] : inputs) {
    in[role] = {{"path", path.string()}, {"git_blob", git_blob_hash_file(path)}};
  }
  j["inputs"] = in;
  if (inputs.contains("dataset")) j["dataset_hash"] = in["dataset"]["git_blob"];
  nlohmann::json out = nlohmann::json::array();
  std::vector<std::filesystem::path> sorted = outputs;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& p : sorted) {
    out.push_back({{"path", std::filesystem::relative(p, out_dir).generic_string()},
                   {"git_blob", git_blob_hash_file(p)}});
  }
  j["outputs"] = out;
  return j;
}

}  // namespace axir
