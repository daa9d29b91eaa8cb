#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "axir/analysis.hpp"
#include "axir/axioms.hpp"
#include "axir/dataset_io.hpp"
#include "axir/error.hpp"
#include "axir/model.hpp"
#include "axir/parallel.hpp"
#include "axir/patching.hpp"
#include "axir/report.hpp"
#include "axir/tokenizer.hpp"
#include "axir/toyforge.hpp"
#include "json_config.hpp"

namespace fs = std::filesystem;
using namespace axir;

namespace {

struct Global {
  int threads = 0;
};

struct ModelArgs {
  std::string dir;
  std::string config;
  std::string weights;
  std::string vocab;
  std::string tokenizer = "wordpiece";

  fs::path config_path() const {
    return config.empty() ? fs::path(dir) / "config.json" : fs::path(config);
  }
  fs::path weights_path() const {
    return weights.empty() ? fs::path(dir) / "weights.axir" : fs::path(weights);
  }
  fs::path vocab_path() const {
    return vocab.empty() ? fs::path(dir) / "vocab.txt" : fs::path(vocab);
  }

  void add(CLI::App* app) {
    app->add_option("--model", dir, "Model directory holding config.json, weights.axir, vocab.txt");
    app->add_option("--model-config", config, "Model config JSON (overrides --model)");
    app->add_option("--weights", weights, "AXIR weight container (overrides --model)");
    app->add_option("--vocab", vocab, "vocab.txt (overrides --model)");
    app->add_option("--tokenizer", tokenizer, "Tokenizer mode")
        ->check(CLI::IsMember({"wordpiece", "whitespace"}))
        ->capture_default_str();
  }

  void require() const {
    if (dir.empty() && (config.empty() || weights.empty())) {
      throw DataError("no model given: pass --model DIR or --model-config and --weights");
    }
  }

  Model model() const {
    require();
    return Model::load(config_path(), weights_path());
  }

  Tokenizer tokenizer_for(const Model& m) const {
    Vocab v = Vocab::load(vocab_path());
    if (v.size() != m.config().vocab_size) {
      throw DataError("vocab.txt has " + std::to_string(v.size()) + " tokens, config expects " +
                      std::to_string(m.config().vocab_size));
    }
    return Tokenizer(std::move(v), tokenizer == "whitespace" ? TokenizerMode::Whitespace
                                                             : TokenizerMode::WordPiece);
  }

  void inputs(std::map<std::string, fs::path>& in) const {
    in["model_config"] = config_path();
    in["weights"] = weights_path();
    if (fs::exists(vocab_path())) in["vocab"] = vocab_path();
  }
};

std::vector<ReportFormat> parse_formats(const std::vector<std::string>& names) {
  std::vector<ReportFormat> out;
  for (const auto& n : names) out.push_back(parse_report_format(n));
  return out;
}

// Resolved config of the invoked subcommand path: top-level options plus the
// nested objects of each parsed subcommand.
nlohmann::json resolved_config(const CLI::App& app) {
  nlohmann::json full = cli::JsonConfig::to_json(&app, true);
  nlohmann::json out = nlohmann::json::object();
  const CLI::App* cur = &app;
  nlohmann::json* src = &full;
  nlohmann::json* dst = &out;
  while (true) {
    for (auto it = src->begin(); it != src->end(); ++it) {
      if (!it.value().is_object()) (*dst)[it.key()] = it.value();
    }
    const auto subs = cur->get_subcommands();
    if (subs.empty()) break;
    cur = subs.front();
    src = &(*src)[cur->get_name()];
    dst = &((*dst)[cur->get_name()] = nlohmann::json::object());
  }
  return out;
}

std::string command_path(const CLI::App& app) {
  std::string s;
  const CLI::App* cur = &app;
  while (!cur->get_subcommands().empty()) {
    cur = cur->get_subcommands().front();
    s += (s.empty() ? "" : " ") + cur->get_name();
  }
  return s;
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  const fs::path& dir() const { return dir_; }

  fs::path write(const std::string& name, const std::string& contents) {
    const fs::path p = dir_ / name;
    write_file(p, contents);
    files_.push_back(p);
    return p;
  }
  void add(const std::vector<fs::path>& paths) {
    files_.insert(files_.end(), paths.begin(), paths.end());
  }
  void matrix(const Matrix& m, const std::vector<ReportFormat>& formats) {
    add(emit_report(m, dir_, formats));
  }
  void manifest(const CLI::App& app, const std::map<std::string, fs::path>& inputs,
                nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json j = make_manifest(command_path(app), resolved_config(app), inputs, files_, dir_);
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_file(dir_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<DiagnosticTriple> load_dataset(const std::string& path) {
  auto triples = read_dataset(path);
  if (triples.empty()) throw DataError("dataset is empty: " + path);
  return triples;
}

// --- subcommands -------------------------------------------------------------

struct ToyArgs {
  bool wired = false;
  bool random = false;
  std::uint64_t seed = 0;
  std::string out = "toy";
  std::size_t dup_head = ToySpec::standard().dup_head;
  std::size_t aggregator_head = ToySpec::standard().aggregator_head;
};

int cmd_toy(const CLI::App& app, const ToyArgs& a) {
  Outputs out(a.out);
  if (a.wired) {
    ToySpec spec = ToySpec::standard();
    spec.dup_head = a.dup_head;
    spec.aggregator_head = a.aggregator_head;
    const ToyModel toy = build_duplicate_head_model(spec);
    toy.config.save(out.dir() / "config.json");
    toy.weights.save(out.dir() / "weights.axir");
    toy.vocab.save(out.dir() / "vocab.txt");
  } else {
    const ModelConfig c = toy_random_config();
    c.save(out.dir() / "config.json");
    build_random_model(a.seed, c).save(out.dir() / "weights.axir");
    toy_vocab().save(out.dir() / "vocab.txt");
  }
  out.add({out.dir() / "config.json", out.dir() / "weights.axir", out.dir() / "vocab.txt"});
  out.manifest(app, {});
  std::cout << "wrote " << (a.wired ? "wired" : "random") << " toy model to " << a.out << "\n";
  return 0;
}

struct SynthArgs {
  ModelArgs model;
  SynthOptions opts;
  std::string out = "synth";
};

int cmd_synth(const CLI::App& app, const SynthArgs& a) {
  const Vocab vocab = Vocab::load(a.model.vocab_path());
  const SynthCorpus sc = synth_corpus(vocab, a.opts);
  Outputs out(a.out);
  write_tsv(out.dir() / "corpus.tsv", sc.corpus);
  write_tsv(out.dir() / "queries.tsv", sc.queries);
  write_run(out.dir() / "run.trec", sc.run);
  out.add({out.dir() / "corpus.tsv", out.dir() / "queries.tsv", out.dir() / "run.trec"});
  out.manifest(app, {{"vocab", a.model.vocab_path()}});
  std::cout << "wrote " << sc.queries.size() << " queries, " << sc.corpus.size()
            << " documents to " << a.out << "\n";
  return 0;
}

struct CurateArgs {
  ModelArgs model;
  std::string corpus, queries, run;
  std::string kind = "tfc1-i";
  std::string location = "end";
  CurateOptions opts;
  std::string out = "dataset";
};

int cmd_curate(const CLI::App& app, CurateArgs a, const Global& g) {
  const Model model = a.model.model();
  const Tokenizer tok = a.model.tokenizer_for(model);
  a.opts.kind = parse_kind(a.kind);
  a.opts.location = parse_location(a.location);
  a.opts.threads = g.threads;
  const Dataset ds = select_queries(model, tok, read_tsv(a.corpus), read_tsv(a.queries),
                                    read_run(a.run), a.opts);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  if (ds.triples.empty()) throw DataError("curation produced no triples");
  Outputs out(a.out);
  write_dataset(out.dir() / "dataset.jsonl", ds.triples);
  out.add({out.dir() / "dataset.jsonl"});
  std::string kept = "qid,selected_term,mean_abs_delta,n_triples\n";
  for (const auto& k : ds.kept) {
    kept += k.qid + "," + k.selected_term + "," + fmt17(k.mean_abs_delta) + "," +
            std::to_string(k.n_triples) + "\n";
  }
  out.write("queries_kept.csv", kept);
  std::map<std::string, fs::path> in{
      {"corpus", a.corpus}, {"queries", a.queries}, {"run", a.run}};
  a.model.inputs(in);
  out.manifest(app, in, {{"seed", a.opts.seed}, {"warnings", ds.warnings}});
  std::cout << "kept " << ds.kept.size() << " queries, " << ds.triples.size() << " triples\n";
  return 0;
}

struct ScoreArgs {
  ModelArgs model;
  std::string dataset;
  std::string out = "scores";
};

int cmd_score(const CLI::App& app, const ScoreArgs& a, const Global& g) {
  const Model model = a.model.model();
  const auto triples = load_dataset(a.dataset);
  std::vector<PairedRuns> runs(triples.size());
  parallel_for(triples.size(), resolve_threads(g.threads), [&](std::size_t i) {
    runs[i] = prepare_runs(model, triples[i], RecordSet::none());
  });
  std::string s = "id,qid,docid,kind,s_low,s_high,gap,direction_contradiction\n";
  std::size_t contradictions = 0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const bool c = runs[i].s_high < runs[i].s_low;
    contradictions += c;
    s += triples[i].id + "," + triples[i].qid + "," + triples[i].docid + "," +
         to_string(triples[i].kind) + "," + fmt17(runs[i].s_low) + "," + fmt17(runs[i].s_high) +
         "," + fmt17(static_cast<double>(runs[i].s_high) - runs[i].s_low) + "," +
         (c ? "true" : "false") + "\n";
  }
  Outputs out(a.out);
  out.write("scores.csv", s);
  std::map<std::string, fs::path> in{{"dataset", a.dataset}};
  a.model.inputs(in);
  out.manifest(app, in);
  std::cout << triples.size() << " triples scored, " << contradictions
            << " direction contradictions\n";
  return 0;
}

struct PatchArgs {
  ModelArgs model;
  std::string dataset;
  std::string sites = "heads";
  bool by_type = false;
  bool by_position = false;
  std::string heads;
  bool keep_contradictions = false;
  double split = 0.0;
  std::vector<std::string> formats = {"csv", "json", "svg"};
  std::string out = "results/patch";
};

SiteKind site_kind_of(const std::string& s) {
  if (s == "resid-pre") return SiteKind::ResidPre;
  if (s == "resid-mid") return SiteKind::ResidMid;
  if (s == "resid-post") return SiteKind::ResidPost;
  if (s == "attn-out") return SiteKind::AttnOut;
  if (s == "mlp-out") return SiteKind::MlpOut;
  return SiteKind::HeadOut;
}

std::string site_label(const HookSite& s) {
  return s.head ? std::to_string(s.layer) + "." + std::to_string(*s.head) : std::to_string(s.layer);
}

// Mean ndiff per (site, position index).
Matrix by_position(const std::string& name, const std::vector<HookSite>& sites,
                   const std::vector<PatchOutcome>& outcomes, const RunOptions& ro) {
  std::size_t max_pos = 0;
  for (const auto& o : outcomes) max_pos = std::max(max_pos, *o.position + 1);
  std::vector<std::string> rows, cols;
  for (const auto& s : sites) rows.push_back(site_label(s));
  for (std::size_t p = 0; p < max_pos; ++p) cols.push_back(std::to_string(p));
  return aggregate(
      name, rows, cols, outcomes, ro,
      [&](const PatchOutcome& o) -> std::optional<std::size_t> {
        return static_cast<std::size_t>(std::find(sites.begin(), sites.end(), o.site) -
                                        sites.begin());
      },
      [](const PatchOutcome& o) { return o.position; });
}

void require_values(const Matrix& m) {
  if (std::none_of(m.values.begin(), m.values.end(), [](const auto& v) { return v.has_value(); })) {
    throw NumericError(m.name + ": every outcome was degenerate or filtered");
  }
}

std::vector<Matrix> patch_matrices(const Model& model, const std::vector<DiagnosticTriple>& triples,
                                   const PatchArgs& a, const RunOptions& ro,
                                   std::vector<PatchOutcome>& outcomes) {
  const ModelConfig& c = model.config();
  std::vector<Matrix> out;
  if (a.sites != "heads") {
    const SiteKind kind = site_kind_of(a.sites);
    Matrix m = sweep_residual(model, triples, kind, ro, &outcomes);
    if (a.by_position) {
      const PatchSpec spec = PatchSpec::sweep(c, kind);
      out.push_back(by_position(to_string(kind) + "_by_position", spec.sites, outcomes, ro));
    } else {
      out.push_back(std::move(m));
    }
    return out;
  }
  std::vector<HookSite> heads =
      a.heads.empty() ? PatchSpec::sweep(c, SiteKind::HeadOut).sites : parse_heads(a.heads);
  if (a.by_type) {
    out.push_back(sweep_heads_by_type(model, triples, heads, ro));
    PatchSpec spec;
    spec.sites = heads;
    spec.granularity = Granularity::PerSiteAndType;
    outcomes = run_dataset(model, triples, spec, ro);
  } else if (a.by_position) {
    PatchSpec spec;
    spec.sites = heads;
    spec.granularity = Granularity::PerSiteAndPosition;
    outcomes = run_dataset(model, triples, spec, ro);
    out.push_back(by_position("head_out_by_position", heads, outcomes, ro));
  } else if (a.heads.empty()) {
    out.push_back(sweep_heads(model, triples, ro, PositionSelector::all(), &outcomes));
  } else {
    PatchSpec spec;
    spec.sites = heads;
    outcomes = run_dataset(model, triples, spec, ro);
    std::vector<std::string> rows;
    for (const auto& h : heads) rows.push_back(site_label(h));
    out.push_back(aggregate(
        "head_out_selected", rows, {"all"}, outcomes, ro,
        [&](const PatchOutcome& o) -> std::optional<std::size_t> {
          return static_cast<std::size_t>(std::find(heads.begin(), heads.end(), o.site) -
                                          heads.begin());
        },
        [](const PatchOutcome&) { return std::optional<std::size_t>(0); }));
  }
  for (const auto& m : out) require_values(m);
  return out;
}

int cmd_patch(const CLI::App& app, const PatchArgs& a, const Global& g) {
  if (a.by_type && a.by_position)
    throw CLI::ValidationError("--by-token-type and --by-position are exclusive");
  const Model model = a.model.model();
  const auto triples = load_dataset(a.dataset);
  const auto formats = parse_formats(a.formats);
  RunOptions ro;
  ro.threads = g.threads;
  ro.keep_contradictions = a.keep_contradictions;

  Outputs out(a.out);
  nlohmann::json extra;
  auto emit = [&](const std::vector<DiagnosticTriple>& ts, const std::string& suffix) {
    std::vector<PatchOutcome> outcomes;
    for (Matrix m : patch_matrices(model, ts, a, ro, outcomes)) {
      m.name += suffix;
      out.matrix(m, formats);
      if (auto am = m.argmax()) {
        std::cout << m.name << ": argmax " << m.row_labels[am->first] << "/"
                  << m.col_labels[am->second] << " = " << fmt17(*m.value(am->first, am->second))
                  << "\n";
      }
    }
    std::string lines;
    std::size_t degenerate = 0, contradictions = 0;
    for (const auto& o : outcomes) {
      lines += outcome_to_json(o).dump() + "\n";
      degenerate += o.flags.degenerate_denominator;
      contradictions += o.flags.direction_contradiction;
    }
    out.write("outcomes" + suffix + ".jsonl", lines);
    extra["outcomes" + suffix] = {{"n", outcomes.size()},
                                  {"degenerate", degenerate},
                                  {"direction_contradiction", contradictions}};
  };
  if (a.split > 0.0) {
    const RelevanceSplit split = split_by_relevance(triples, a.split);
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
    emit(split.top, "_top");
    emit(split.bottom, "_bottom");
  } else {
    emit(triples, "");
  }
  std::map<std::string, fs::path> in{{"dataset", a.dataset}};
  a.model.inputs(in);
  out.manifest(app, in, extra);
  return 0;
}

struct AblateArgs {
  ModelArgs model;
  std::string dataset;
  std::string heads;
  std::string mode = "zero";
  bool keep_contradictions = false;
  std::string out = "results/ablate";
};

int cmd_ablate(const CLI::App& app, const AblateArgs& a, const Global& g) {
  const Model model = a.model.model();
  const auto triples = load_dataset(a.dataset);
  const auto heads = parse_heads(a.heads);
  RunOptions ro;
  ro.threads = g.threads;
  ro.keep_contradictions = a.keep_contradictions;
  std::vector<AblationMode> modes;
  if (a.mode == "both") {
    modes = {AblationMode::Zero, AblationMode::Mean};
  } else {
    modes = {parse_ablation_mode(a.mode)};
  }
  std::string summary = "head,mode,n_triples,mean_gap_before,mean_gap_after,collapse_fraction\n";
  std::string per_triple = "head,mode,triple_id,gap_before,gap_after\n";
  for (AblationMode mode : modes) {
    for (const HeadAblation& h : ablate(model, triples, heads, mode, ro)) {
      const std::string head = site_label(h.head);
      summary += head + "," + to_string(mode) + "," + std::to_string(h.triples.size()) + "," +
                 fmt17(h.mean_gap_before) + "," + fmt17(h.mean_gap_after) + "," +
                 fmt17(h.collapse_fraction) + "\n";
      for (const auto& t : h.triples) {
        per_triple += head + "," + to_string(mode) + "," + t.triple_id + "," +
                      fmt17(t.gap_before) + "," + fmt17(t.gap_after) + "\n";
      }
      std::cout << head << " " << to_string(mode) << ": gap " << h.mean_gap_before << " -> "
                << h.mean_gap_after << " (collapse " << h.collapse_fraction << ")\n";
    }
  }
  Outputs out(a.out);
  out.write("ablation.csv", summary);
  out.write("ablation_triples.csv", per_triple);
  std::map<std::string, fs::path> in{{"dataset", a.dataset}};
  a.model.inputs(in);
  out.manifest(app, in);
  return 0;
}

struct AttnArgs {
  ModelArgs model;
  std::string dataset;
  std::string heads;
  std::string from_type = "inj";
  bool cohort_split = false;
  bool per_token = false;
  bool keep_contradictions = false;
  std::vector<std::string> formats = {"csv", "json", "svg"};
  std::string out = "results/attn";
};

int cmd_attn(const CLI::App& app, const AttnArgs& a, const Global& g) {
  const Model model = a.model.model();
  const auto triples = load_dataset(a.dataset);
  AttentionOptions o;
  o.from_type = parse_token_type(a.from_type);
  o.cohort_split = a.cohort_split;
  o.per_token = a.per_token;
  o.keep_contradictions = a.keep_contradictions;
  o.threads = g.threads;
  const AttentionReport r = attention_by_type(model, triples, parse_heads(a.heads), o);
  if (r.stats.empty()) {
    throw DataError("no document contains a '" + a.from_type + "' position");
  }
  Outputs out(a.out);
  out.write("attention_stats.csv", attention_csv(r));
  out.matrix(attention_matrix(r, "attention_from_" + a.from_type), parse_formats(a.formats));
  std::map<std::string, fs::path> in{{"dataset", a.dataset}};
  a.model.inputs(in);
  out.manifest(app, in,
               {{"max_row_sum_error", r.max_row_sum_error},
                {"rows_checked", r.rows_checked},
                {"docs_used", r.docs_used},
                {"docs_skipped", r.docs_skipped}});
  std::cout << r.docs_used << " documents, " << r.docs_skipped << " skipped; max row-sum error "
            << r.max_row_sum_error << "\n";
  return 0;
}

struct SweepArgs {
  ModelArgs model;
  std::string queries, docs, run;
  std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t k_docs = 10;
  std::uint64_t seed = 0;
  std::string term;
  std::string filler = "a";
  std::string out = "results/sweep_position";
};

int cmd_sweep(const CLI::App& app, const SweepArgs& a, const Global& g) {
  const Model model = a.model.model();
  const Tokenizer tok = a.model.tokenizer_for(model);
  const auto queries =
      build_sweep_queries(tok, read_tsv(a.docs), read_tsv(a.queries), read_run(a.run), a.k_docs,
                          a.seed, a.filler,
                          a.term.empty() ? std::nullopt : std::optional<std::string>(a.term));
  if (queries.empty()) throw DataError("no query has candidates and an eligible term");
  const auto points = position_sweep(model, tok, queries, a.grid, a.filler, g.threads);
  Outputs out(a.out);
  out.write("position_sweep.csv", sweep_csv(points));
  std::string terms = "qid,term,n_docs\n";
  for (const auto& q : queries)
    terms += q.qid + "," + q.term + "," + std::to_string(q.docs.size()) + "\n";
  out.write("terms.csv", terms);
  std::map<std::string, fs::path> in{{"queries", a.queries}, {"docs", a.docs}, {"run", a.run}};
  a.model.inputs(in);
  out.manifest(app, in, {{"seed", a.seed}});
  for (const auto& p : points) {
    std::cout << "f=" << p.position << " mean " << p.mean_score << " (" << p.n_docs << " docs, "
              << p.n_skipped << " skipped)\n";
  }
  return 0;
}

struct ReportArgs {
  std::string in = "results";
  std::vector<std::string> formats = {"ascii"};
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  const auto formats = parse_formats(a.formats);
  if (!fs::is_directory(a.in)) throw DataError("not a directory: " + a.in);
  std::vector<fs::path> inputs;
  for (const auto& e : fs::recursive_directory_iterator(a.in)) {
    if (e.is_regular_file() && e.path().extension() == ".json" &&
        e.path().filename() != "manifest.json") {
      inputs.push_back(e.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());
  std::size_t n = 0;
  for (const auto& p : inputs) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    if (!j.is_object() || !j.contains("values") || !j.contains("counts")) continue;
    const Matrix m = matrix_from_json(j);
    const fs::path dir = a.out.empty() ? p.parent_path()
                                       : fs::path(a.out) / fs::relative(p.parent_path(), a.in);
    for (auto f : formats) {
      if (f == ReportFormat::Ascii) std::cout << p.string() << "\n" << to_ascii(m) << "\n";
    }
    emit_report(m, dir, formats);
    ++n;
  }
  if (n == 0) throw DataError("no matrix JSON files under " + a.in);
  std::cerr << "rendered " << n << " matrices\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Axiomatic activation-patching toolkit for bi-encoder rankers", "axir");
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON experiment config; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--threads", g.threads,
                 "Worker threads (0: AXIR_THREADS, else all cores)")
      ->capture_default_str();

  ToyArgs toy;
  auto* toy_app = app.add_subcommand("toy", "Constructed models");
  toy_app->require_subcommand(1);
  auto* toy_build = toy_app->add_subcommand("build", "Write a toy model (config, weights, vocab)");
  auto* wired = toy_build->add_flag("--wired", toy.wired, "Wired duplicate-head model")
                    ->capture_default_str();
  auto* random =
      toy_build->add_flag("--random", toy.random, "Seeded random model")->capture_default_str();
  wired->excludes(random);
  toy_build->add_option("--seed", toy.seed, "Seed for --random")->capture_default_str();
  toy_build->add_option("--dup-head", toy.dup_head, "Layer-0 head wired as duplicate detector")
      ->capture_default_str();
  toy_build->add_option("--aggregator-head", toy.aggregator_head, "Layer-1 aggregator head")
      ->capture_default_str();
  toy_build->add_option("--out", toy.out, "Output directory")->capture_default_str();

  SynthArgs synth;
  auto* synth_app = app.add_subcommand("synth", "Generate a synthetic corpus, queries and run");
  synth.model.add(synth_app);
  synth_app->add_option("--seed", synth.opts.seed)->capture_default_str();
  synth_app->add_option("--n-queries", synth.opts.n_queries)->capture_default_str();
  synth_app->add_option("--docs-per-query", synth.opts.n_docs_per_query)->capture_default_str();
  synth_app->add_option("--tf-min", synth.opts.tf_min)->capture_default_str();
  synth_app->add_option("--tf-max", synth.opts.tf_max)->capture_default_str();
  synth_app->add_option("--background-min", synth.opts.background_min)->capture_default_str();
  synth_app->add_option("--background-max", synth.opts.background_max)->capture_default_str();
  synth_app->add_option("--filler", synth.opts.filler)->capture_default_str();
  synth_app->add_option("--out", synth.out, "Output directory")->capture_default_str();

  CurateArgs cur;
  auto* cur_app = app.add_subcommand("curate", "Build a TFC1 diagnostic dataset");
  cur.model.add(cur_app);
  cur_app->add_option("--corpus", cur.corpus, "docid<TAB>text")->required();
  cur_app->add_option("--queries", cur.queries, "qid<TAB>text")->required();
  cur_app->add_option("--run", cur.run, "TREC run with candidates")->required();
  cur_app->add_option("--kind", cur.kind)
      ->check(CLI::IsMember({"tfc1-i", "tfc1-r", "tfc1-a"}))
      ->capture_default_str();
  cur_app->add_option("--location", cur.location, "end, begin, random or at:F")
      ->capture_default_str();
  cur_app->add_option("--k-docs", cur.opts.k_docs)->capture_default_str();
  cur_app->add_option("--n-queries", cur.opts.n_queries)->capture_default_str();
  cur_app->add_option("--seed", cur.opts.seed)->capture_default_str();
  cur_app->add_option("--filler", cur.opts.filler)->capture_default_str();
  cur_app->add_option("--out", cur.out, "Output directory")->capture_default_str();

  ScoreArgs sc;
  auto* score_app = app.add_subcommand("score", "Per-triple s_low/s_high table");
  sc.model.add(score_app);
  score_app->add_option("--dataset", sc.dataset)->required();
  score_app->add_option("--out", sc.out, "Output directory")->capture_default_str();

  PatchArgs pa;
  auto* patch_app = app.add_subcommand("patch", "Activation patching sweeps");
  pa.model.add(patch_app);
  patch_app->add_option("--dataset", pa.dataset)->required();
  patch_app->add_option("--sites", pa.sites)
      ->check(CLI::IsMember({"resid-pre", "resid-mid", "resid-post", "attn-out", "mlp-out",
                             "heads"}))
      ->capture_default_str();
  patch_app
      ->add_flag("--by-token-type", pa.by_type,
                 "Group by donor token type (default for residual sites)")
      ->capture_default_str();
  patch_app->add_flag("--by-position", pa.by_position, "Per-position matrix")
      ->capture_default_str();
  patch_app->add_option("--heads", pa.heads, "Restrict head patching to L.H,...");
  patch_app
      ->add_flag("--keep-contradictions", pa.keep_contradictions,
                 "Aggregate triples whose scores contradict the expected direction")
      ->capture_default_str();
  patch_app->add_option("--split", pa.split,
                        "Also split by relevance: top/bottom fraction per query, in (0, 0.5]")
      ->capture_default_str();
  patch_app->add_option("--format", pa.formats, "csv, json, svg, ascii (default csv,json,svg)")
      ->delimiter(',');
  patch_app->add_option("--out", pa.out, "Output directory")->capture_default_str();

  AblateArgs ab;
  auto* ablate_app = app.add_subcommand("ablate", "Zero or mean ablation of heads");
  ab.model.add(ablate_app);
  ablate_app->add_option("--dataset", ab.dataset)->required();
  ablate_app->add_option("--heads", ab.heads, "L.H,...")->required();
  ablate_app->add_option("--mode", ab.mode)
      ->check(CLI::IsMember({"zero", "mean", "both"}))
      ->capture_default_str();
  ablate_app->add_flag("--keep-contradictions", ab.keep_contradictions)->capture_default_str();
  ablate_app->add_option("--out", ab.out, "Output directory")->capture_default_str();

  AttnArgs at;
  auto* attn_app = app.add_subcommand("attn", "Attention mass by destination token type");
  at.model.add(attn_app);
  attn_app->add_option("--dataset", at.dataset)->required();
  attn_app->add_option("--heads", at.heads, "L.H,...")->required();
  attn_app->add_option("--from-type", at.from_type)
      ->check(CLI::IsMember({"cls", "inj", "qterm+", "qterm-", "other", "sep"}))
      ->capture_default_str();
  attn_app
      ->add_flag("--cohort-split", at.cohort_split,
                 "Split by whether the original document contained the term")
      ->capture_default_str();
  attn_app
      ->add_flag("--per-token", at.per_token,
                 "Average per destination token instead of total type mass")
      ->capture_default_str();
  attn_app->add_flag("--keep-contradictions", at.keep_contradictions)->capture_default_str();
  attn_app->add_option("--format", at.formats, "csv, json, svg, ascii (default csv,json,svg)")
      ->delimiter(',');
  attn_app->add_option("--out", at.out, "Output directory")->capture_default_str();

  SweepArgs sw;
  auto* sweep_app = app.add_subcommand("sweep-position", "Score vs. injection position");
  sw.model.add(sweep_app);
  sweep_app->add_option("--queries", sw.queries)->required();
  sweep_app->add_option("--docs", sw.docs, "Corpus TSV")->required();
  sweep_app->add_option("--run", sw.run, "TREC run with candidates")->required();
  sweep_app->add_option("--grid", sw.grid, "Normalized positions (default 0,0.25,0.5,0.75,1)")
      ->delimiter(',');
  sweep_app->add_option("--k-docs", sw.k_docs)->capture_default_str();
  sweep_app->add_option("--seed", sw.seed)->capture_default_str();
  sweep_app->add_option("--term", sw.term, "Inject this term instead of a seeded choice");
  sweep_app->add_option("--filler", sw.filler)->capture_default_str();
  sweep_app->add_option("--out", sw.out, "Output directory")->capture_default_str();

  ReportArgs rep;
  auto* report_app = app.add_subcommand("report", "Re-render matrix JSON files");
  report_app->add_option("--in", rep.in)->capture_default_str();
  report_app->add_option("--format", rep.formats, "csv, json, svg, ascii (default ascii)")
      ->delimiter(',');
  report_app->add_option("--out", rep.out, "Output root (default: next to inputs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (toy_build->parsed()) {
      if (!toy.wired && !toy.random)
        throw CLI::ValidationError("toy build needs --wired or --random");
      return cmd_toy(app, toy);
    }
    if (synth_app->parsed()) return cmd_synth(app, synth);
    if (cur_app->parsed()) return cmd_curate(app, cur, g);
    if (score_app->parsed()) return cmd_score(app, sc, g);
    if (patch_app->parsed()) return cmd_patch(app, pa, g);
    if (ablate_app->parsed()) return cmd_ablate(app, ab, g);
    if (attn_app->parsed()) return cmd_attn(app, at, g);
    if (sweep_app->parsed()) return cmd_sweep(app, sw, g);
    if (report_app->parsed()) return cmd_report(rep);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
