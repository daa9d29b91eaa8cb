#include "axir/toyforge.hpp"

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "axir/axioms.hpp"
#include "axir/error.hpp"

namespace axir {

ToySpec ToySpec::standard() {
  ToySpec s;
  s.topic_words = {"average", "snowfall", "nyc",     "wellesley", "acceptance",
                   "rate",    "college",  "weather", "winter",    "city",
                   "river",   "museum",   "history", "bridge",    "harbor",
                   "garden",  "library",  "station", "festival",  "mountain"};
  s.background_words.assign(stopwords().begin(), stopwords().end());
  return s;
}

Vocab toy_vocab(const ToySpec& spec) {
  std::vector<std::string> tokens = {Vocab::kPad, Vocab::kUnk, Vocab::kCls, Vocab::kSep};
  tokens.insert(tokens.end(), spec.background_words.begin(), spec.background_words.end());
  tokens.insert(tokens.end(), spec.topic_words.begin(), spec.topic_words.end());
  return Vocab(std::move(tokens));
}

namespace {

std::map<std::string, Tensor> zero_weights(const ModelConfig& config) {
  std::map<std::string, Tensor> w;
  for (const auto& [name, shape] : config.required_tensors()) w.emplace(name, Tensor(shape));
  return w;
}

Tensor& mut(std::map<std::string, Tensor>& w, const std::string& name) { return w.at(name); }

void fill(Tensor& t, float v) {
  for (float& x : t.data()) x = v;
}

// Scores a whitespace document of `n` words: k copies of `term`, the rest filler.
float probe(const Model& model, const Tokenizer& tok, const std::string& term, std::size_t k,
            std::size_t n) {
  std::vector<std::string> words(n, "a");
  for (std::size_t i = 0; i < k; ++i) words[(i * 3 + 1) % n] = term;
  const auto ids = tok.from_words(words).ids;
  return score(model.encode_query({}), model.encode(ids, RecordSet::none()).cls);
}

}  // namespace

ToyModel build_duplicate_head_model(const ToySpec& spec) {
  const std::size_t d = spec.d_model;
  const std::size_t dh = spec.d_head();
  Vocab vocab = toy_vocab(spec);
  const std::size_t v = vocab.size();
  if (spec.n_heads < 2 || d % spec.n_heads != 0) {
    throw DataError("toy spec: need >= 2 heads dividing d_model");
  }
  if (spec.dup_head >= spec.n_heads || spec.aggregator_head >= spec.n_heads) {
    throw DataError("toy spec: wired head index out of range");
  }
  if (v > dh) {
    throw DataError("toy spec: vocabulary of " + std::to_string(v) +
                    " does not fit one-hot into d_head " + std::to_string(dh));
  }
  if (v + 2 > d) throw DataError("toy spec: no room for the anchor and relevance coordinates");
  if (!(spec.alpha > 0.0f) || !(spec.anchor > 0.0f)) {
    throw DataError("toy spec: alpha and anchor must be positive");
  }
  if (!vocab.find("a")) throw DataError("toy spec: background words must include filler 'a'");

  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = spec.n_heads;
  c.d_model = d;
  c.d_head = dh;
  c.d_ff = spec.d_ff;
  c.vocab_size = v;
  c.max_positions = spec.max_positions;
  c.fixed_query_coordinate = spec.relevance_coordinate();
  c.validate();

  auto w = zero_weights(c);
  const std::size_t r = spec.relevance_coordinate();
  const std::size_t a = spec.anchor_coordinate();
  const double A = spec.anchor;

  // Embedding: one-hot e_t, normalized by the embedding LayerNorm to
  // z = (c + b)·e_t − b·1 with c = √(d−1), b = 1/√(d−1). gamma = 1/(c+b) and
  // beta = b/(c+b)·1 + A·e_a turn that into e_t + A·e_a.
  {
    Tensor& emb = mut(w, "token_embedding");
    for (std::size_t t = 0; t < v; ++t) emb.at(t, t) = 1.0f;
    const double cc = std::sqrt(static_cast<double>(d) - 1.0);
    const double b = 1.0 / cc;
    fill(mut(w, "embed_ln.gamma"), static_cast<float>(1.0 / (cc + b)));
    Tensor& beta = mut(w, "embed_ln.beta");
    fill(beta, static_cast<float>(b / (cc + b)));
    beta.data()[a] += static_cast<float>(A);
  }

  // Every residual row is e_t + A·e_a + y·e_r. At y = 0 the row mean and
  // standard deviation are the same for every token: mu0 = (1+A)/d,
  // sigma0² = (1+A²)/d − mu0². gamma = sigma0, beta = mu0 make the block
  // LayerNorms exact identities at y = 0 and increasing in y.
  const double mu0 = (1.0 + A) / static_cast<double>(d);
  const double sigma0 = std::sqrt((1.0 + A * A) / static_cast<double>(d) - mu0 * mu0);
  for (std::size_t l = 0; l < 2; ++l) {
    for (const char* ln : {"ln1", "ln2"}) {
      fill(mut(w, layer_name(l, std::string(ln) + ".gamma")), static_cast<float>(sigma0));
      fill(mut(w, layer_name(l, std::string(ln) + ".beta")), static_cast<float>(mu0));
    }
  }

  // Layer 0 duplicate head: logits α²·[t == u]/√d_head between token t and u;
  // values are one-hot token rows; the output projection sums the attention
  // mass on topic words into r.
  {
    const std::size_t off = spec.dup_head * dh;
    Tensor& wq = mut(w, layer_name(0, "attn.q.weight"));
    Tensor& wk = mut(w, layer_name(0, "attn.k.weight"));
    Tensor& wv = mut(w, layer_name(0, "attn.v.weight"));
    Tensor& wo = mut(w, layer_name(0, "attn.o.weight"));
    const std::set<std::string> topics(spec.topic_words.begin(), spec.topic_words.end());
    for (std::size_t t = 0; t < v; ++t) {
      wq.at(t, off + t) = spec.alpha;
      wk.at(t, off + t) = spec.alpha;
      wv.at(t, off + t) = 1.0f;
      if (topics.contains(vocab.token(static_cast<int>(t)))) wo.at(off + t, r) = 1.0f;
    }
  }

  // Layer 1 aggregator: Q = K = 0 gives uniform attention; V reads r into the
  // head's first dimension and O writes it back to r.
  {
    const std::size_t off = spec.aggregator_head * dh;
    mut(w, layer_name(1, "attn.v.weight")).at(r, off) = 1.0f;
    mut(w, layer_name(1, "attn.o.weight")).at(off, r) = 1.0f;
  }

  WeightContainer container;
  for (auto& [name, t] : w) container.insert(name, std::move(t));
  ToyModel out{c, std::move(container), vocab};

  // Self-check: more copies of a topic word at fixed length must score
  // strictly higher, and a document without topic words must score ~0.
  const Model model(out.config, out.weights);
  const Tokenizer tok(vocab, TokenizerMode::Whitespace);
  const std::size_t n = 16;
  for (const auto& term : spec.topic_words) {
    float prev = probe(model, tok, term, 0, n);
    if (std::abs(prev) > 1e-3f) {
      throw NumericError("toy model: filler-only document scores " + std::to_string(prev));
    }
    for (std::size_t k = 1; k <= 4; ++k) {
      const float s = probe(model, tok, term, k, n);
      if (!(s > prev)) {
        throw NumericError("toy model not monotone in occurrences of '" + term + "' at k=" +
                           std::to_string(k) + ": " + std::to_string(s) +
                           " <= " + std::to_string(prev));
      }
      prev = s;
    }
  }
  return out;
}

ModelConfig toy_random_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_head = 8;
  c.d_ff = 32;
  c.vocab_size = toy_vocab().size();
  c.max_positions = 128;
  return c;
}

WeightContainer build_random_model(std::uint64_t seed, const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const float scale = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  WeightContainer w;
  for (const auto& [name, shape] : config.required_tensors()) {
    Tensor t(shape);
    const bool gamma = name.ends_with(".gamma");
    const bool beta = name.ends_with(".beta");
    for (float& x : t.data()) {
      const float z = normal(rng);
      x = gamma ? 1.0f + 0.1f * z : beta ? 0.1f * z : scale * z;
    }
    w.insert(name, std::move(t));
  }
  return w;
}

}  // namespace axir
