#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "axir/error.hpp"
#include "axir/patching.hpp"
#include "axir/toyforge.hpp"
#include "support.hpp"

using namespace axir;

namespace {

std::vector<DiagnosticTriple> head(const std::vector<DiagnosticTriple>& all, std::size_t n) {
  return {all.begin(), all.begin() + static_cast<long>(std::min(n, all.size()))};
}

std::string dump(const std::vector<PatchOutcome>& outcomes) {
  std::string s;
  for (const auto& o : outcomes) s += outcome_to_json(o).dump() + "\n";
  return s;
}

DiagnosticTriple ranked(const std::string& qid, int i) {
  DiagnosticTriple t;
  t.id = qid + ":" + std::to_string(i);
  t.qid = qid;
  t.doc_score = static_cast<float>(i);
  return t;
}

}  // namespace

TEST_SUITE("patching") {

TEST_CASE("normalized difference") {
  CHECK(*normalized_difference(2.0f, 1.0f, 3.0f) == 0.5f);
  CHECK(*normalized_difference(1.0f, 1.0f, 3.0f) == 0.0f);
  CHECK(*normalized_difference(3.0f, 1.0f, 3.0f) == 1.0f);
  CHECK(*normalized_difference(5.0f, 1.0f, 3.0f) == 2.0f);
  CHECK(*normalized_difference(0.0f, 1.0f, 3.0f) == -0.5f);
  CHECK(!normalized_difference(1.0f, 1.0f, 1.0f));
  // Relative guard: 1e-6 * max(1, |s_high|).
  CHECK(!normalized_difference(0.0f, 1000.0f, 1000.0005f));
  CHECK(normalized_difference(0.0f, 1000.0f, 1000.01f).has_value());
  CHECK(!normalized_difference(0.0f, 0.0f, 5e-7f));
  CHECK(normalized_difference(0.0f, 0.0f, 2e-6f).has_value());
}

TEST_CASE("direction rule picks the expected-higher run as donor") {
  const auto& toy = fixture::toy();
  for (const Dataset* ds : {&toy.inject, &toy.replace}) {
    const DiagnosticTriple& t = ds->triples.front();
    const PairedRuns r = prepare_runs(toy.model, t, RecordSet::none());
    if (t.kind == PerturbationKind::TFC1_R) {
      CHECK(r.recipient == &t.perturbed);
      CHECK(r.donor == &t.baseline);
    } else {
      CHECK(r.recipient == &t.baseline);
      CHECK(r.donor == &t.perturbed);
    }
    CHECK(r.s_high == *(t.kind == PerturbationKind::TFC1_R ? t.s_baseline : t.s_perturbed));
  }
}

TEST_CASE("no-op perturbation is degenerate at every site") {
  const auto& toy = fixture::toy();
  DiagnosticTriple t = toy.inject.triples.front();
  t.perturbed = t.baseline;
  t.types_perturbed = t.types_baseline;
  const auto outcomes =
      run_triple(toy.model, t, PatchSpec::sweep(toy.config, SiteKind::HeadOut));
  REQUIRE(outcomes.size() == toy.config.n_layers * toy.config.n_heads);
  for (const auto& o : outcomes) {
    CHECK(o.flags.degenerate_denominator);
    CHECK(!o.ndiff);
    CHECK_FALSE(include_in_aggregate(o, {}));
  }
}

TEST_CASE("contradicting triples are flagged and excluded by default") {
  const auto& toy = fixture::toy();
  DiagnosticTriple t = toy.inject.triples.front();
  t.expected_higher = ExpectedHigher::Baseline;
  const auto outcomes =
      run_triple(toy.model, t, PatchSpec::sweep(toy.config, SiteKind::ResidPre));
  for (const auto& o : outcomes) {
    CHECK(o.flags.direction_contradiction);
    CHECK(o.s_high < o.s_low);
    CHECK_FALSE(include_in_aggregate(o, {}));
    RunOptions keep;
    keep.keep_contradictions = true;
    CHECK(include_in_aggregate(o, keep));
  }
}

TEST_CASE("self-patch gives ndiff 0 for every site kind") {
  const auto& toy = fixture::toy();
  for (const auto& t : head(toy.inject.triples, 4)) {
    const PairedRuns r = prepare_runs(toy.model, t, RecordSet::none());
    const auto own = toy.model.encode(r.recipient->ids, RecordSet::all());
    std::vector<std::size_t> all(r.recipient->size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (const HookSite& site : all_sites(toy.config)) {
      const float s = patched_score(toy.model, r.recipient->ids, r.query_vec, site, all, own.cache);
      CHECK(s == r.s_low);
      CHECK(*normalized_difference(s, r.s_low, r.s_high) == 0.0f);
    }
  }
}

TEST_CASE("final CLS patch recovers fully; layer-0 patch reproduces the donor") {
  const auto& toy = fixture::toy();
  const std::size_t last = toy.config.n_layers - 1;
  PatchSpec cls;
  cls.sites = {HookSite::resid_post(last)};
  cls.selector = PositionSelector::at({0});
  PatchSpec first;
  first.sites = {HookSite::resid_pre(0)};
  for (const auto& o : run_dataset(toy.model, toy.inject.triples, cls)) {
    if (!o.ndiff) continue;
    CHECK(std::abs(*o.ndiff - 1.0f) <= 1e-4f);
  }
  for (const auto& o : run_dataset(toy.model, toy.inject.triples, first)) {
    CHECK(std::abs(o.s_patched - o.s_high) <= 1e-5f);
  }
}

TEST_CASE("selectors") {
  const auto& toy = fixture::toy();
  const DiagnosticTriple& t = toy.inject.triples.front();
  PatchSpec spec;
  spec.sites = {HookSite::resid_pre(1)};
  spec.selector = PositionSelector::of_type(TokenType::Inj);
  auto out = run_triple(toy.model, t, spec);
  REQUIRE(out.size() == 1);
  CHECK(out[0].selector == "type:inj");

  spec.selector = PositionSelector::at({t.perturbed.size()});
  CHECK_THROWS_AS(run_triple(toy.model, t, spec), PatchError);

  spec.selector = PositionSelector::all();
  spec.granularity = Granularity::PerSiteAndPosition;
  out = run_triple(toy.model, t, spec);
  CHECK(out.size() == t.perturbed.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    CHECK(out[p].position == p);
    CHECK(out[p].token_type == t.types_perturbed[p]);
  }

  spec.granularity = Granularity::PerSiteAndType;
  out = run_triple(toy.model, t, spec);
  std::set<TokenType> present(t.types_perturbed.begin(), t.types_perturbed.end());
  CHECK(out.size() == present.size());

  DiagnosticTriple bad = t;
  bad.baseline.ids.push_back(bad.baseline.ids.back());
  CHECK_THROWS_AS(run_triple(toy.model, bad, spec), DataError);
  spec.sites = {HookSite::head_out(0, 9)};
  CHECK_THROWS_AS(run_triple(toy.model, t, spec), DataError);
}

TEST_CASE("head sweep localizes the wired head") {
  const auto& toy = fixture::toy();
  const Matrix m = sweep_heads(toy.model, toy.inject.triples);
  CHECK(m.n_rows() == 2);
  CHECK(m.n_cols() == toy.spec.n_heads);
  const auto arg = m.argmax();
  REQUIRE(arg);
  CHECK(arg->first == 0);
  CHECK(arg->second == toy.spec.dup_head);
  CHECK(*m.value(0, toy.spec.dup_head) >= 0.9);
  std::vector<double> unwired;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < toy.spec.n_heads; ++h) {
      if ((l == 0 && h == toy.spec.dup_head) || (l == 1 && h == toy.spec.aggregator_head))
        continue;
      unwired.push_back(*m.value(l, h));
    }
  std::sort(unwired.begin(), unwired.end());
  CHECK(unwired[unwired.size() / 2] <= 0.1);
}

TEST_CASE("residual sweep shape and type dominance") {
  const auto& toy = fixture::toy();
  const auto some = head(toy.inject.triples, 12);
  const Matrix m = sweep_residual(toy.model, some, SiteKind::ResidPre);
  CHECK(m.n_rows() == toy.config.n_layers);
  CHECK(m.n_cols() == 6);
  const auto col = [&](TokenType t) {
    const auto types = token_types_for(PerturbationKind::TFC1_I);
    return static_cast<std::size_t>(std::find(types.begin(), types.end(), t) - types.begin());
  };
  for (std::size_t l = 0; l < m.n_rows(); ++l) {
    REQUIRE(m.value(l, col(TokenType::Inj)));
    REQUIRE(m.value(l, col(TokenType::Other)));
    CHECK(*m.value(l, col(TokenType::Inj)) > *m.value(l, col(TokenType::Other)));
  }

  const Matrix r = sweep_residual(toy.model, head(toy.replace.triples, 4), SiteKind::MlpOut);
  CHECK(r.n_cols() == 5);
  CHECK_THROWS_AS(sweep_residual(toy.model, some, SiteKind::HeadOut), DataError);
}

TEST_CASE("per-type head sweep") {
  const auto& toy = fixture::toy();
  const Matrix m = sweep_heads_by_type(toy.model, head(toy.inject.triples, 10),
                                       {HookSite::head_out(0, toy.spec.dup_head)});
  CHECK(m.n_rows() == 1);
  CHECK(m.n_cols() == 6);
}

TEST_CASE("empty cells are missing, not zero") {
  const auto& toy = fixture::toy();
  std::vector<PatchOutcome> outcomes(1);
  outcomes[0].ndiff = 0.5f;
  const Matrix m = aggregate("t", {"a", "b"}, {"x"}, outcomes, {},
                             [](const PatchOutcome&) { return std::optional<std::size_t>(0); },
                             [](const PatchOutcome&) { return std::optional<std::size_t>(0); });
  CHECK(m.value(0, 0) == 0.5);
  CHECK(!m.value(1, 0));
  CHECK(m.count(1, 0) == 0);

  DiagnosticTriple t = toy.inject.triples.front();
  t.perturbed = t.baseline;
  t.types_perturbed = t.types_baseline;
  CHECK_THROWS_AS(sweep_heads(toy.model, {t}), NumericError);
}

TEST_CASE("aggregation is invariant to triple order and thread count") {
  const auto& toy = fixture::toy();
  auto triples = head(toy.inject.triples, 24);
  RunOptions one;
  one.threads = 1;
  RunOptions many;
  many.threads = 4;
  many.chunk_triples = 5;
  std::vector<PatchOutcome> a, b;
  const Matrix m1 = sweep_heads(toy.model, triples, one, PositionSelector::all(), &a);
  const Matrix m2 = sweep_heads(toy.model, triples, many, PositionSelector::all(), &b);
  CHECK(m1 == m2);
  CHECK(dump(a) == dump(b));
  std::reverse(triples.begin(), triples.end());
  CHECK(sweep_heads(toy.model, triples, many) == m1);
}

TEST_CASE("head matrix shape follows the config") {
  ModelConfig c = toy_random_config();
  c.n_layers = 6;
  c.n_heads = 12;
  c.d_model = 24;
  c.d_head = 2;
  const Model m(c, build_random_model(4, c));
  const auto& r = fixture::random_model();
  RunOptions keep;
  keep.keep_contradictions = true;
  const Matrix hm = sweep_heads(m, r.inject.triples, keep);
  CHECK(hm.n_rows() == 6);
  CHECK(hm.n_cols() == 12);
}

TEST_CASE("zero ablation collapses the gap only for wired heads") {
  const auto& toy = fixture::toy();
  std::vector<HookSite> heads;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < toy.spec.n_heads; ++h) heads.push_back(HookSite::head_out(l, h));
  const auto report = ablate(toy.model, toy.inject.triples, heads, AblationMode::Zero);
  REQUIRE(report.size() == heads.size());
  for (const auto& ha : report) {
    const bool wired = (ha.head.layer == 0 && ha.head.head == toy.spec.dup_head) ||
                       (ha.head.layer == 1 && ha.head.head == toy.spec.aggregator_head);
    if (wired) {
      CHECK(ha.collapse_fraction >= 0.9);
    } else {
      CHECK(std::abs(ha.collapse_fraction) <= 0.01);
    }
    CHECK(ha.mean_gap_before > 0.0);
  }
}

TEST_CASE("mean ablation") {
  const auto& toy = fixture::toy();
  const auto some = head(toy.inject.triples, 20);
  const auto zero = HookSite::head_out(1, 0);
  const auto report = ablate(toy.model, some, {zero}, AblationMode::Mean);
  CHECK(std::abs(report[0].collapse_fraction) <= 1e-6);

  std::vector<DiagnosticTriple> single = {toy.inject.triples.front()};
  CHECK_THROWS_AS(ablate(toy.model, single, {zero}, AblationMode::Mean), DataError);
  CHECK_THROWS_AS(ablate(toy.model, some, {HookSite::resid_pre(0)}, AblationMode::Zero),
                  DataError);
  CHECK(parse_ablation_mode("mean") == AblationMode::Mean);
  CHECK_THROWS_AS(parse_ablation_mode("max"), DataError);
}

TEST_CASE("relevance split") {
  std::vector<DiagnosticTriple> hundred;
  for (int i = 0; i < 100; ++i) hundred.push_back(ranked("q", i));
  const RelevanceSplit s = split_by_relevance(hundred, 0.1);
  CHECK(s.top.size() == 10);
  CHECK(s.bottom.size() == 10);
  CHECK(*s.top.front().doc_score == 99.0f);
  CHECK(*s.bottom.back().doc_score == 0.0f);
  CHECK(s.warnings.empty());

  std::vector<DiagnosticTriple> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(ranked("q", i));
  const RelevanceSplit half = split_by_relevance(ten, 0.5);
  std::set<std::string> ids;
  for (const auto& t : half.top) ids.insert(t.id);
  for (const auto& t : half.bottom) ids.insert(t.id);
  CHECK(ids.size() == 10);

  std::vector<DiagnosticTriple> five;
  for (int i = 0; i < 5; ++i) five.push_back(ranked("q", i));
  const RelevanceSplit small = split_by_relevance(five, 0.1);
  CHECK(small.top.size() == 1);
  CHECK(small.warnings.size() == 1);

  CHECK_THROWS_AS(split_by_relevance(ten, 0.0), DataError);
  CHECK_THROWS_AS(split_by_relevance(ten, 0.6), DataError);
}

TEST_CASE("head list parsing") {
  const auto h = parse_heads("0.9,1.6");
  CHECK(h == std::vector<HookSite>{HookSite::head_out(0, 9), HookSite::head_out(1, 6)});
  CHECK_THROWS_AS(parse_heads("3"), DataError);
  CHECK_THROWS_AS(parse_heads("a.b"), DataError);
  CHECK_THROWS_AS(parse_heads(""), DataError);
}

}  // TEST_SUITE
