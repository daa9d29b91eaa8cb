#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "axir/error.hpp"
#include "axir/model.hpp"
#include "axir/patching.hpp"
#include "axir/toyforge.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace axir;

namespace {

std::vector<int> random_ids(std::mt19937_64& rng, std::size_t vocab, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> id(0, static_cast<int>(vocab) - 1);
  std::vector<int> ids(len(rng));
  for (int& x : ids) x = id(rng);
  return ids;
}

double max_abs_diff(const Tensor& t, const oracle::Mat& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c)
      worst = std::max(worst, static_cast<double>(std::abs(t.at(r, c) - m[r][c])));
  return worst;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig c = toy_random_config();
  c.validate();
  ModelConfig bad = c;
  bad.d_head = 7;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = c;
  bad.n_layers = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  CHECK(ModelConfig::from_json(c.to_json()) == c);
}

TEST_CASE("load reports missing tensors and shape mismatches by name") {
  const ModelConfig c = toy_random_config();
  const WeightContainer full = build_random_model(1, c);

  WeightContainer missing;
  for (const auto& [name, t] : full.tensors())
    if (name != "layer.1.mlp.w2.bias") missing.insert(name, t);
  try {
    Model m(c, missing);
    FAIL("expected MissingTensorError");
  } catch (const MissingTensorError& e) {
    CHECK(e.name() == "layer.1.mlp.w2.bias");
  }

  WeightContainer wrong;
  for (const auto& [name, t] : full.tensors())
    wrong.insert(name, name == "layer.0.attn.q.weight" ? Tensor({16, 8}) : t);
  CHECK_THROWS_WITH_AS(Model(c, wrong), doctest::Contains("layer.0.attn.q.weight"),
                       ShapeMismatchError);

  const auto dir = fixture::scratch_dir("model_load");
  c.save(dir / "config.json");
  full.save(dir / "weights.axir");
  const Model loaded = Model::load(dir / "config.json", dir / "weights.axir");
  CHECK(loaded.config() == c);
  CHECK_THROWS_AS(Model::load(dir / "absent.json", dir / "weights.axir"), DataError);
}

TEST_CASE("sequence validation") {
  const Model& m = fixture::random_model().model;
  const std::vector<int> empty;
  CHECK_THROWS_AS(m.encode(empty, RecordSet::none()), SequenceError);
  const std::vector<int> out_of_vocab = {2, 9999, 3};
  CHECK_THROWS_AS(m.encode(out_of_vocab, RecordSet::none()), SequenceError);
  const std::vector<int> too_long(m.config().max_positions + 1, 2);
  CHECK_THROWS_AS(m.encode(too_long, RecordSet::none()), SequenceError);
}

TEST_CASE("forward pass matches the straight-line reference") {
  const Model& m = fixture::random_model().model;
  const ModelConfig& c = m.config();
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ids = random_ids(rng, c.vocab_size, 24);
    const auto ref = oracle::forward(c, m.weights(), ids);
    const EncodeResult got = m.encode(ids, RecordSet::all());
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      CHECK(max_abs_diff(got.cache.at(HookSite::resid_pre(l)), ref.resid_pre[l]) <= 1e-4);
      CHECK(max_abs_diff(got.cache.at(HookSite::attn_out(l)), ref.attn_out[l]) <= 1e-4);
      CHECK(max_abs_diff(got.cache.at(HookSite::resid_mid(l)), ref.resid_mid[l]) <= 1e-4);
      CHECK(max_abs_diff(got.cache.at(HookSite::mlp_out(l)), ref.mlp_out[l]) <= 1e-4);
      CHECK(max_abs_diff(got.cache.at(HookSite::resid_post(l)), ref.resid_post[l]) <= 1e-4);
      for (std::size_t h = 0; h < c.n_heads; ++h)
        CHECK(max_abs_diff(got.cache.at(HookSite::head_out(l, h)), ref.head_out[l][h]) <= 1e-4);
    }
    for (std::size_t j = 0; j < c.d_model; ++j)
      CHECK(std::abs(got.cls.values()[j] - ref.cls[j]) <= 1e-4L);
  }
}

TEST_CASE("residual additivity and head-sum invariants") {
  const Model& m = fixture::random_model().model;
  const ModelConfig& c = m.config();
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ids = random_ids(rng, c.vocab_size, 30);
    const auto ref = oracle::forward(c, m.weights(), ids);
    const auto got = m.encode(ids, RecordSet::all());
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      const Tensor attn_in = add(got.cache.at(HookSite::resid_pre(l)),
                                 got.cache.at(HookSite::attn_out(l)));
      CHECK(max_abs_diff(attn_in, ref.attn_in[l]) <= 1e-5);
      const Tensor mlp_in = add(got.cache.at(HookSite::resid_mid(l)),
                                got.cache.at(HookSite::mlp_out(l)));
      CHECK(max_abs_diff(mlp_in, ref.mlp_in[l]) <= 1e-5);

      Tensor sum = Tensor::zeros({ids.size(), c.d_model});
      for (std::size_t h = 0; h < c.n_heads; ++h)
        add_inplace(sum, got.cache.at(HookSite::head_out(l, h)));
      sum = add_bias_rows(sum, m.weights().get(layer_name(l, "attn.o.bias")));
      const Tensor& attn = got.cache.at(HookSite::attn_out(l));
      for (std::size_t i = 0; i < sum.size(); ++i)
        CHECK(std::abs(sum.values()[i] - attn.values()[i]) <= 1e-5f);
    }
  }
}

TEST_CASE("attention pattern rows sum to one") {
  const Model& m = fixture::random_model().model;
  std::mt19937_64 rng(23);
  const auto ids = random_ids(rng, m.config().vocab_size, 40);
  const auto got = m.encode(ids, RecordSet::all());
  for (std::size_t l = 0; l < m.config().n_layers; ++l) {
    for (std::size_t h = 0; h < m.config().n_heads; ++h) {
      const Tensor& p = got.cache.at(HookSite::attn_pattern(l, h));
      CHECK(p.rows() == ids.size());
      CHECK(p.cols() == ids.size());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0.0;
        for (float v : p.row(r)) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("recording does not change the result") {
  const Model& m = fixture::random_model().model;
  std::mt19937_64 rng(24);
  const auto ids = random_ids(rng, m.config().vocab_size, 20);
  const auto a = m.encode(ids, RecordSet::all());
  const auto b = m.encode(ids, RecordSet::none());
  CHECK(a.cls == b.cls);
  CHECK(b.cache.tensors().empty());
  CHECK(a.cache.tensors().size() == all_sites(m.config()).size());
  CHECK(m.encode(ids, RecordSet::all()).cache.tensors() == a.cache.tensors());
}

TEST_CASE("self-patch is the identity at every site") {
  const Model& m = fixture::random_model().model;
  std::mt19937_64 rng(25);
  const auto q = random_ids(rng, m.config().vocab_size, 6);
  const auto ids = random_ids(rng, m.config().vocab_size, 20);
  const Tensor qv = m.encode_query(q);
  const auto own = m.encode(ids, RecordSet::all());
  const float base = score(qv, own.cls);
  std::vector<std::size_t> every(ids.size());
  for (std::size_t i = 0; i < every.size(); ++i) every[i] = i;
  for (const HookSite& site : all_sites(m.config())) {
    CHECK(patched_score(m, ids, qv, site, every, own.cache) == base);
    CHECK(patched_score(m, ids, qv, site, {0}, own.cache) == base);
  }
}

TEST_CASE("query encoding is independent of document-side patches") {
  const Model& m = fixture::random_model().model;
  std::mt19937_64 rng(26);
  const auto q = random_ids(rng, m.config().vocab_size, 6);
  std::uniform_int_distribution<int> id(0, static_cast<int>(m.config().vocab_size) - 1);
  std::vector<int> d1(12), d2(12);
  for (int& x : d1) x = id(rng);
  for (int& x : d2) x = id(rng);
  const Tensor before = m.encode_query(q);
  const auto donor = m.encode(d2, RecordSet::all());
  for (const HookSite& site : all_sites(m.config())) {
    const Patch p{site, {0, 3}, donor.cache.at(site)};
    (void)m.encode_with_patches(d1, std::span(&p, 1));
    CHECK(m.encode_query(q) == before);
  }
  CHECK(before == m.encode(q, RecordSet::none()).cls);
}

TEST_CASE("patching the final CLS row transfers the donor score") {
  const Model& m = fixture::random_model().model;
  const std::size_t last = m.config().n_layers - 1;
  std::mt19937_64 rng(27);
  const auto q = random_ids(rng, m.config().vocab_size, 5);
  const auto d1 = random_ids(rng, m.config().vocab_size, 15);
  auto d2 = d1;
  d2[7] = (d2[7] + 1) % static_cast<int>(m.config().vocab_size);
  const Tensor qv = m.encode_query(q);
  const auto donor = m.encode(d2, RecordSet::all());
  const float s_high = score(qv, donor.cls);
  CHECK(patched_score(m, d1, qv, HookSite::resid_post(last), {0}, donor.cache) == s_high);
  CHECK(std::abs(patched_score(m, d1, qv, HookSite::resid_pre(0), [&] {
                   std::vector<std::size_t> all(d1.size());
                   for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                   return all;
                 }(), donor.cache) - s_high) <= 1e-5f);
}

TEST_CASE("patch errors") {
  const Model& m = fixture::random_model().model;
  const std::vector<int> ids = {2, 10, 11, 12, 3};
  const auto own = m.encode(ids, RecordSet::all());
  const HookSite site = HookSite::resid_pre(0);

  const Patch out_of_range{site, {5}, own.cache.at(site)};
  CHECK_THROWS_AS(m.encode_with_patches(ids, std::span(&out_of_range, 1)), PatchError);
  const Patch wrong_width{site, {0}, Tensor({5, 3})};
  CHECK_THROWS_AS(m.encode_with_patches(ids, std::span(&wrong_width, 1)), PatchError);
  const Patch wrong_len{site, {0}, Tensor({4, m.config().d_model})};
  CHECK_THROWS_AS(m.encode_with_patches(ids, std::span(&wrong_len, 1)), PatchError);
  const Patch bad_layer{HookSite::resid_pre(9), {0}, own.cache.at(site)};
  CHECK_THROWS_AS(m.encode_with_patches(ids, std::span(&bad_layer, 1)), DataError);
  const std::vector<int> shorter = {2, 10, 3};
  CHECK_THROWS_AS(patched_score(m, shorter, own.cls, site, {0}, own.cache), PatchError);
}

TEST_CASE("hook site names") {
  CHECK(HookSite::head_out(0, 9).str() == "head_out.0.9");
  CHECK(HookSite::parse("resid_pre.3") == HookSite::resid_pre(3));
  CHECK(HookSite::parse("attn_pattern.1.2") == HookSite::attn_pattern(1, 2));
  CHECK_THROWS_AS(HookSite::parse("head_out.1"), DataError);
  CHECK_THROWS_AS(HookSite::parse("resid_pre.1.2"), DataError);
  CHECK_THROWS_AS(HookSite::parse("bogus.1"), DataError);
  const ModelConfig c = toy_random_config();
  CHECK_THROWS_AS(HookSite::head_out(0, 2).validate(c), DataError);
  CHECK_THROWS_AS((HookSite{SiteKind::ResidPre, 0, 1}).validate(c), DataError);
  CHECK(all_sites(c).size() == c.n_layers * (5 + 2 * c.n_heads));
}

TEST_CASE("score is a dot product") {
  CHECK(score(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})) == 0.0f);
  std::mt19937_64 rng(28);
  const auto a = oracle::random_values(rng, 32);
  const auto b = oracle::random_values(rng, 32);
  CHECK(std::abs(score(Tensor({32}, a), Tensor({32}, b)) - oracle::dot_ld(a, b)) <= 1e-6L);
}

}  // TEST_SUITE
