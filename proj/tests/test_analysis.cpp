#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "axir/analysis.hpp"
#include "axir/content_hash.hpp"
#include "axir/dataset_io.hpp"
#include "axir/error.hpp"
#include "axir/patching.hpp"
#include "support.hpp"

using namespace axir;

namespace {

const AttentionStats* find(const AttentionReport& r, TokenType to, Cohort c = Cohort::All) {
  for (const auto& s : r.stats)
    if (s.to_type == to && s.cohort == c) return &s;
  return nullptr;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("attention rows are partitions of unit mass") {
  const auto& toy = fixture::toy();
  std::vector<HookSite> heads;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < toy.spec.n_heads; ++h) heads.push_back(HookSite::head_out(l, h));
  const AttentionReport r = attention_by_type(toy.model, toy.inject.triples, heads);
  CHECK(r.max_row_sum_error <= 1e-6);
  CHECK(r.rows_checked > 0);
  CHECK(r.docs_used == toy.inject.triples.size());
  for (const auto& s : r.stats) {
    CHECK(s.mean_attention >= 0.0);
    CHECK(s.mean_attention <= 1.0 + 1e-9);
    CHECK(s.n_pairs >= 1);
  }
}

TEST_CASE("wired head attends from injected tokens to existing occurrences") {
  const auto& toy = fixture::toy();
  const AttentionReport r = attention_by_type(toy.model, toy.inject.triples,
                                              {HookSite::head_out(0, toy.spec.dup_head)});
  const auto* plus = find(r, TokenType::QtermPlus);
  const auto* other = find(r, TokenType::Other);
  REQUIRE(plus);
  REQUIRE(other);
  CHECK(plus->mean_attention > other->mean_attention);
}

TEST_CASE("absent destination types contribute nothing") {
  const auto& toy = fixture::toy();
  std::vector<DiagnosticTriple> ts = {
      perturb_inject(toy.tok, "nyc snowfall", "the city", "nyc", Location::end()),
      perturb_inject(toy.tok, "nyc snowfall", "the snowfall city", "nyc", Location::end())};
  const AttentionReport r =
      attention_by_type(toy.model, ts, {HookSite::head_out(0, toy.spec.dup_head)});
  const auto* minus = find(r, TokenType::QtermMinus);
  REQUIRE(minus);
  CHECK(minus->n_docs == 1);
  CHECK(minus->n_pairs == 1);
  CHECK(find(r, TokenType::QtermPlus) == nullptr);
  const auto* other = find(r, TokenType::Other);
  REQUIRE(other);
  CHECK(other->n_docs == 2);

  AttentionOptions from_plus;
  from_plus.from_type = TokenType::QtermPlus;
  const AttentionReport none =
      attention_by_type(toy.model, ts, {HookSite::head_out(0, 0)}, from_plus);
  CHECK(none.docs_skipped == 2);
  CHECK(none.stats.empty());
}

TEST_CASE("cohort split and per-token weighting") {
  const auto& toy = fixture::toy();
  const std::vector<DiagnosticTriple> ts = {
      perturb_inject(toy.tok, "nyc snowfall", "the city", "nyc", Location::end()),
      perturb_inject(toy.tok, "nyc snowfall", "the nyc nyc city", "nyc", Location::end())};
  AttentionOptions o;
  o.cohort_split = true;
  const auto head = HookSite::head_out(0, toy.spec.dup_head);
  const AttentionReport r = attention_by_type(toy.model, ts, {head}, o);
  const auto* has = find(r, TokenType::Other, Cohort::HasExistingOccurrence);
  const auto* no = find(r, TokenType::Other, Cohort::NoExistingOccurrence);
  REQUIRE(has);
  REQUIRE(no);
  CHECK(has->n_docs + no->n_docs == ts.size());

  o.cohort_split = false;
  const double total = find(attention_by_type(toy.model, ts, {head}, o), TokenType::QtermPlus)
                           ->mean_attention;
  o.per_token = true;
  const double per = find(attention_by_type(toy.model, ts, {head}, o), TokenType::QtermPlus)
                         ->mean_attention;
  CHECK(per == doctest::Approx(total / 2.0).epsilon(1e-12));

  const Matrix m = attention_matrix(r, "attention_from_inj");
  CHECK(m.n_rows() == 2);
  CHECK(m.n_cols() == 6);
  CHECK(attention_csv(r).rfind("head,from_type,to_type,cohort,", 0) == 0);
  CHECK_THROWS_AS(attention_by_type(toy.model, ts, {HookSite::resid_pre(0)}), DataError);
}

TEST_CASE("position sweep endpoints match the begin and end variants") {
  const auto& toy = fixture::toy();
  const auto& s = toy.synth;
  auto queries = build_sweep_queries(toy.tok, s.corpus, s.queries, s.run, 3, 5, "a");
  queries.resize(3);
  const auto points = position_sweep(toy.model, toy.tok, queries, {1.0, 0.0, 0.5});
  REQUIRE(points.size() == 3);
  CHECK(points[0].position == 0.0);
  CHECK(points[2].position == 1.0);

  for (const auto& [idx, loc] : {std::pair{0, Location::begin()}, std::pair{2, Location::end()}}) {
    double sum_q = 0.0;
    for (const auto& q : queries) {
      const Tensor qv = toy.model.encode_query(toy.tok.tokenize(q.text).ids);
      double sum_d = 0.0;
      for (const auto& d : q.docs) {
        const auto t = perturb_inject(toy.tok, q.text, d, q.term, loc);
        sum_d += score(qv, toy.model.encode(t.perturbed.ids, RecordSet::none()).cls);
      }
      sum_q += sum_d / static_cast<double>(q.docs.size());
    }
    CHECK(points[idx].mean_score ==
          doctest::Approx(sum_q / static_cast<double>(queries.size())).epsilon(1e-12));
    CHECK(points[idx].n_docs == 9);
    CHECK(points[idx].n_queries == 3);
  }
  CHECK(sweep_csv(points).rfind("position,mean_score,n_docs,n_queries,n_skipped\n", 0) == 0);
  CHECK_THROWS_AS(position_sweep(toy.model, toy.tok, queries, {}), DataError);
  CHECK_THROWS_AS(position_sweep(toy.model, toy.tok, queries, {1.5}), DataError);
}

TEST_CASE("sweep queries pick the same term as curation") {
  const auto& toy = fixture::toy();
  const auto& s = toy.synth;
  const auto queries = build_sweep_queries(toy.tok, s.corpus, s.queries, s.run, 10, 5, "a");
  for (const auto& kept : toy.inject.kept) {
    const auto it = std::find_if(queries.begin(), queries.end(),
                                 [&](const SweepQuery& q) { return q.qid == kept.qid; });
    REQUIRE(it != queries.end());
    CHECK(it->term == kept.selected_term);
  }
}

TEST_CASE("over-length documents are skipped with a count") {
  const auto& toy = fixture::toy();
  std::string long_doc;
  for (std::size_t i = 0; i + 2 < toy.config.max_positions; ++i) long_doc += "the ";
  const std::vector<SweepQuery> qs = {{"q", "nyc", "nyc", {long_doc, "the city"}}};
  const auto points = position_sweep(toy.model, toy.tok, qs, {0.5});
  CHECK(points[0].n_skipped == 1);
  CHECK(points[0].n_docs == 1);
}

TEST_CASE("git blob hashes") {
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const auto dir = fixture::scratch_dir("hash");
  write_file(dir / "h.txt", "hello\n");
  CHECK(git_blob_hash_file(dir / "h.txt") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("manifest records config, inputs and outputs") {
  const auto dir = fixture::scratch_dir("manifest");
  write_file(dir / "data.jsonl", "{}\n");
  write_file(dir / "b.csv", "x\n");
  write_file(dir / "a.csv", "y\n");
  const nlohmann::json cfg = {{"seed", 3}};
  const auto m = make_manifest("patch", cfg, {{"dataset", dir / "data.jsonl"}},
                               {dir / "b.csv", dir / "a.csv"}, dir);
  CHECK(m["config"] == cfg);
  CHECK(m["dataset_hash"] == git_blob_hash("{}\n"));
  CHECK(m["outputs"][0]["path"] == "a.csv");
  CHECK(m["outputs"][1]["git_blob"] == git_blob_hash("x\n"));
}

}  // TEST_SUITE
