#include "axir/axioms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "axir/error.hpp"
#include "axir/parallel.hpp"

namespace axir {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Uniform index in [0, n); mt19937_64 output is fully specified by the
// standard, unlike the distribution classes.
std::size_t pick(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

bool is_punctuation_word(const std::string& w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) {
    return c < 0x80 && !std::isalnum(c);
  });
}

std::string lowercase(std::string s) {
  for (char& c : s)
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
  return s;
}

std::vector<std::string> words_of(const Tokenizer& tok, const std::string& text) {
  return tok.tokenize(text).words;
}

int single_filler_id(const Tokenizer& tok, const std::string& filler) {
  auto pieces = tok.word_pieces(lowercase(filler));
  if (pieces.size() != 1 || pieces[0].first == tok.vocab().unk()) {
    throw DataError("filler '" + filler + "' must be a single in-vocabulary token");
  }
  return pieces[0].first;
}

DiagnosticTriple base_triple(const Tokenizer& tok, const std::string& query,
                             const std::string& term) {
  DiagnosticTriple t;
  t.query_text = query;
  t.query = tok.tokenize(query);
  t.selected_term = lowercase(term);
  if (t.selected_term.empty()) throw DataError("selected term is empty");
  if (std::find(t.query.words.begin(), t.query.words.end(), t.selected_term) ==
      t.query.words.end()) {
    throw DataError("selected term '" + term + "' is not a word of query '" + query + "'");
  }
  for (auto& [id, piece] : tok.word_pieces(t.selected_term)) t.selected_term_pieces.push_back(id);
  if (t.selected_term_pieces.empty()) {
    throw DataError("selected term '" + term + "' tokenizes to zero pieces");
  }
  return t;
}

void check_length(const DiagnosticTriple& t, std::size_t max_positions) {
  if (t.perturbed.size() > max_positions || t.baseline.size() > max_positions) {
    throw SequenceError("perturbed document has " + std::to_string(t.perturbed.size()) +
                        " tokens, above max_positions " + std::to_string(max_positions));
  }
}

std::vector<TokenType> label_doc(const TokenizedText& doc, const DiagnosticTriple& t,
                                 const std::vector<WordSpan>& injected,
                                 const std::vector<WordSpan>& filler) {
  std::vector<TokenType> types(doc.size(), TokenType::Other);
  if (types.empty()) return types;
  types.front() = TokenType::Cls;
  types.back() = TokenType::Sep;
  auto contains = [](const std::vector<WordSpan>& spans, const WordSpan& s) {
    return std::find(spans.begin(), spans.end(), s) != spans.end();
  };
  for (std::size_t w = 0; w < doc.word_spans.size(); ++w) {
    const WordSpan& span = doc.word_spans[w];
    TokenType type = TokenType::Other;
    if (contains(filler, span)) {
      type = TokenType::Other;
    } else if (contains(injected, span)) {
      type = TokenType::Inj;
    } else if (doc.words[w] == t.selected_term) {
      type = TokenType::QtermPlus;
    } else if (!is_punctuation_word(doc.words[w]) &&
               std::find(t.query.words.begin(), t.query.words.end(), doc.words[w]) !=
                   t.query.words.end()) {
      type = TokenType::QtermMinus;
    }
    for (std::size_t p = span.begin; p < span.end; ++p) types[p] = type;
  }
  return types;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
  return splitmix64(seed ^ fnv1a(key));
}

// --- enum text forms -------------------------------------------------------

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::TFC1_I: return "tfc1-i";
    case PerturbationKind::TFC1_R: return "tfc1-r";
    case PerturbationKind::TFC1_A: return "tfc1-a";
  }
  return "?";
}

PerturbationKind parse_kind(const std::string& text) {
  const std::string s = lowercase(text);
  if (s == "tfc1-i" || s == "tfc1_i") return PerturbationKind::TFC1_I;
  if (s == "tfc1-r" || s == "tfc1_r") return PerturbationKind::TFC1_R;
  if (s == "tfc1-a" || s == "tfc1_a") return PerturbationKind::TFC1_A;
  throw DataError("unknown perturbation kind: " + text);
}

std::string to_string(TokenType type) {
  switch (type) {
    case TokenType::Cls: return "cls";
    case TokenType::Inj: return "inj";
    case TokenType::QtermPlus: return "qterm+";
    case TokenType::QtermMinus: return "qterm-";
    case TokenType::Other: return "other";
    case TokenType::Sep: return "sep";
  }
  return "?";
}

TokenType parse_token_type(const std::string& text) {
  const std::string s = lowercase(text);
  for (TokenType t : kAllTokenTypes)
    if (to_string(t) == s) return t;
  if (s == "qterm_plus") return TokenType::QtermPlus;
  if (s == "qterm_minus") return TokenType::QtermMinus;
  throw DataError("unknown token type: " + text);
}

std::string to_string(const Location& location) {
  switch (location.kind) {
    case LocationKind::End: return "end";
    case LocationKind::Begin: return "begin";
    case LocationKind::RandomPosition: return "random";
    case LocationKind::NormalizedPosition: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "at:%.17g", location.fraction);
      return buf;
    }
  }
  return "?";
}

Location parse_location(const std::string& text) {
  const std::string s = lowercase(text);
  if (s == "end") return Location::end();
  if (s == "begin") return Location::begin();
  if (s == "random") return Location::random();
  if (s.starts_with("at:")) {
    double f = 0.0;
    try {
      f = std::stod(s.substr(3));
    } catch (const std::exception&) {
      throw DataError("bad location: " + text);
    }
    if (!(f >= 0.0 && f <= 1.0)) throw DataError("normalized location outside [0,1]: " + text);
    return Location::at(f);
  }
  throw DataError("unknown location: " + text);
}

std::string to_string(ExpectedHigher e) {
  return e == ExpectedHigher::Perturbed ? "perturbed" : "baseline";
}

ExpectedHigher parse_expected_higher(const std::string& text) {
  if (text == "perturbed") return ExpectedHigher::Perturbed;
  if (text == "baseline") return ExpectedHigher::Baseline;
  throw DataError("unknown expected_higher: " + text);
}

std::vector<TokenType> token_types_for(PerturbationKind kind) {
  if (kind == PerturbationKind::TFC1_R) {
    return {TokenType::Cls, TokenType::QtermPlus, TokenType::QtermMinus, TokenType::Other,
            TokenType::Sep};
  }
  return {std::begin(kAllTokenTypes), std::end(kAllTokenTypes)};
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",   "as",   "at",    "be",  "by",   "do",
      "does", "for",  "from", "how",   "in",   "is",    "it",  "of",   "on",
      "or",   "that", "the",  "this",  "to",   "was",   "were", "what", "when",
      "where", "which", "who", "why",  "with", "can",   "you", "your", "its"};
  return words;
}

std::size_t insertion_word_index(double fraction, std::size_t n_words) {
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n_words)));
}

// --- perturbations ---------------------------------------------------------

DiagnosticTriple perturb_inject(const Tokenizer& tok, const std::string& query,
                                const std::string& doc, const std::string& selected_term,
                                const Location& location, const PerturbOptions& options) {
  DiagnosticTriple t = base_triple(tok, query, selected_term);
  single_filler_id(tok, options.filler);
  t.kind = location.kind == LocationKind::RandomPosition ? PerturbationKind::TFC1_A
                                                         : PerturbationKind::TFC1_I;
  t.location = location;
  t.expected_higher = ExpectedHigher::Perturbed;
  t.seed = options.seed;

  const std::vector<std::string> words = words_of(tok, doc);
  t.term_in_original = std::find(words.begin(), words.end(), t.selected_term) != words.end();
  std::size_t at = words.size();
  switch (location.kind) {
    case LocationKind::End: at = words.size(); break;
    case LocationKind::Begin: at = 0; break;
    case LocationKind::NormalizedPosition:
      if (!(location.fraction >= 0.0 && location.fraction <= 1.0)) {
        throw DataError("normalized location outside [0,1]");
      }
      at = insertion_word_index(location.fraction, words.size());
      break;
    case LocationKind::RandomPosition: {
      std::mt19937_64 rng(options.seed);
      at = pick(rng, words.size() + 1);
      break;
    }
  }

  const std::size_t n_pieces = t.selected_term_pieces.size();
  std::vector<std::string> perturbed_words = words;
  perturbed_words.insert(perturbed_words.begin() + static_cast<long>(at), t.selected_term);
  std::vector<std::string> baseline_words = words;
  baseline_words.insert(baseline_words.begin() + static_cast<long>(at), n_pieces,
                        lowercase(options.filler));

  t.perturbed = tok.from_words(perturbed_words);
  t.baseline = tok.from_words(baseline_words);
  t.injected_spans = {t.perturbed.word_spans[at]};
  for (std::size_t i = 0; i < n_pieces; ++i)
    t.filler_spans.push_back(t.baseline.word_spans[at + i]);
  check_length(t, options.max_positions);

  const auto labels = label_token_types(t);
  t.types_baseline = labels.baseline;
  t.types_perturbed = labels.perturbed;
  return t;
}

DiagnosticTriple perturb_replace(const Tokenizer& tok, const std::string& query,
                                 const std::string& doc, const std::string& selected_term,
                                 const PerturbOptions& options) {
  DiagnosticTriple t = base_triple(tok, query, selected_term);
  single_filler_id(tok, options.filler);
  t.kind = PerturbationKind::TFC1_R;
  t.location = Location::end();
  t.expected_higher = ExpectedHigher::Baseline;
  t.seed = options.seed;

  const std::vector<std::string> words = words_of(tok, doc);
  const std::size_t n_pieces = t.selected_term_pieces.size();
  std::vector<std::string> replaced;
  std::vector<std::size_t> filler_word_indices;
  for (const auto& w : words) {
    if (w == t.selected_term) {
      for (std::size_t i = 0; i < n_pieces; ++i) {
        filler_word_indices.push_back(replaced.size());
        replaced.push_back(lowercase(options.filler));
      }
    } else {
      replaced.push_back(w);
    }
  }
  if (filler_word_indices.empty()) {
    throw NotApplicableError("term '" + t.selected_term + "' does not occur in document");
  }
  t.term_in_original = true;
  t.baseline = tok.from_words(words);
  t.perturbed = tok.from_words(replaced);
  for (std::size_t w : filler_word_indices) t.filler_spans.push_back(t.perturbed.word_spans[w]);
  check_length(t, options.max_positions);

  const auto labels = label_token_types(t);
  t.types_baseline = labels.baseline;
  t.types_perturbed = labels.perturbed;
  return t;
}

TokenLabels label_token_types(const DiagnosticTriple& t) {
  if (t.kind == PerturbationKind::TFC1_R) {
    return {label_doc(t.baseline, t, {}, {}), label_doc(t.perturbed, t, {}, t.filler_spans)};
  }
  return {label_doc(t.baseline, t, {}, t.filler_spans),
          label_doc(t.perturbed, t, t.injected_spans, {})};
}

// --- curation --------------------------------------------------------------

std::vector<std::string> eligible_terms(const Tokenizer& tok, const std::string& query,
                                        const std::string& filler) {
  std::vector<std::string> out;
  const std::string f = lowercase(filler);
  for (const auto& w : words_of(tok, query)) {
    if (w == f || is_punctuation_word(w) || stopwords().contains(w)) continue;
    if (std::find(out.begin(), out.end(), w) != out.end()) continue;
    const auto pieces = tok.word_pieces(w);
    if (std::any_of(pieces.begin(), pieces.end(),
                    [&](const auto& p) { return p.first == tok.vocab().unk(); })) {
      continue;
    }
    out.push_back(w);
  }
  return out;
}

namespace {

struct QueryWork {
  std::vector<DiagnosticTriple> triples;
  std::vector<std::string> warnings;
  std::string term;
  double mean_abs_delta = 0.0;
  bool usable = false;
};

}  // namespace

Dataset select_queries(const Model& model, const Tokenizer& tok,
                       const std::vector<TextRecord>& corpus,
                       const std::vector<TextRecord>& queries,
                       const std::vector<RunEntry>& candidates, const CurateOptions& options) {
  std::map<std::string, const std::string*> docs;
  for (const auto& d : corpus) docs[d.id] = &d.text;
  std::map<std::string, std::vector<const RunEntry*>> by_query;
  for (const auto& c : candidates) by_query[c.qid].push_back(&c);
  for (auto& [qid, list] : by_query) {
    std::stable_sort(list.begin(), list.end(), [](const RunEntry* a, const RunEntry* b) {
      return a->rank < b->rank;
    });
  }

  PerturbOptions popts;
  popts.filler = options.filler;
  popts.max_positions = model.config().max_positions;

  std::vector<QueryWork> work(queries.size());
  parallel_for(queries.size(), resolve_threads(options.threads), [&](std::size_t qi) {
    const TextRecord& q = queries[qi];
    QueryWork& out = work[qi];
    auto it = by_query.find(q.id);
    if (it == by_query.end() || it->second.empty()) {
      out.warnings.push_back("query " + q.id + ": no candidates, skipped");
      return;
    }
    std::vector<std::pair<const RunEntry*, const std::string*>> top;
    for (const RunEntry* c : it->second) {
      if (top.size() == options.k_docs) break;
      auto d = docs.find(c->docid);
      if (d == docs.end()) {
        out.warnings.push_back("query " + q.id + ": candidate " + c->docid + " not in corpus");
        continue;
      }
      top.emplace_back(c, d->second);
    }

    std::vector<std::string> terms = eligible_terms(tok, q.text, options.filler);
    if (options.kind == PerturbationKind::TFC1_R) {
      std::erase_if(terms, [&](const std::string& term) {
        return std::none_of(top.begin(), top.end(), [&](const auto& c) {
          const auto w = words_of(tok, *c.second);
          return std::find(w.begin(), w.end(), term) != w.end();
        });
      });
    }
    if (terms.empty() || top.empty()) {
      out.warnings.push_back("query " + q.id + ": no eligible term or documents, skipped");
      return;
    }
    std::mt19937_64 rng(derive_seed(options.seed, q.id));
    out.term = terms[pick(rng, terms.size())];

    const Tensor qvec = model.encode_query(tok.tokenize(q.text).ids);
    auto doc_score = [&](const TokenizedText& t) {
      return score(qvec, model.encode(t.ids, RecordSet::none()).cls);
    };

    PerturbOptions local = popts;
    double total = 0.0;
    for (const auto& [cand, text] : top) {
      local.seed = derive_seed(options.seed, q.id + "/" + cand->docid);
      DiagnosticTriple t;
      try {
        Location loc = options.location;
        if (options.kind == PerturbationKind::TFC1_A) loc = Location::random();
        t = options.kind == PerturbationKind::TFC1_R
                ? perturb_replace(tok, q.text, *text, out.term, local)
                : perturb_inject(tok, q.text, *text, out.term, loc, local);
      } catch (const NotApplicableError&) {
        continue;
      } catch (const SequenceError& e) {
        out.warnings.push_back("query " + q.id + ", doc " + cand->docid + ": " + e.what());
        continue;
      }
      t.id = q.id + ":" + cand->docid;
      t.qid = q.id;
      t.docid = cand->docid;
      t.candidate_rank = cand->rank;
      t.s_baseline = doc_score(t.baseline);
      t.s_perturbed = doc_score(t.perturbed);
      t.doc_score = t.kind == PerturbationKind::TFC1_R ? *t.s_baseline
                                                       : doc_score(tok.tokenize(*text));
      const float high = t.expected_higher == ExpectedHigher::Perturbed ? *t.s_perturbed
                                                                         : *t.s_baseline;
      const float low = t.expected_higher == ExpectedHigher::Perturbed ? *t.s_baseline
                                                                        : *t.s_perturbed;
      t.direction_contradiction = high < low;
      total += std::abs(static_cast<double>(*t.s_perturbed) - *t.s_baseline);
      out.triples.push_back(std::move(t));
    }
    if (out.triples.empty()) {
      out.warnings.push_back("query " + q.id + ": no applicable documents, skipped");
      return;
    }
    out.mean_abs_delta = total / static_cast<double>(out.triples.size());
    out.usable = true;
  });

  Dataset ds;
  ds.seed = options.seed;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (auto& w : work[i].warnings) ds.warnings.push_back(std::move(w));
    if (work[i].usable) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (work[a].mean_abs_delta != work[b].mean_abs_delta) {
      return work[a].mean_abs_delta > work[b].mean_abs_delta;
    }
    return queries[a].id < queries[b].id;
  });
  if (order.size() > options.n_queries) order.resize(options.n_queries);
  for (std::size_t i : order) {
    ds.kept.push_back({queries[i].id, work[i].term, work[i].mean_abs_delta,
                       work[i].triples.size()});
    for (auto& t : work[i].triples) ds.triples.push_back(std::move(t));
  }
  return ds;
}

// --- synthetic corpus ------------------------------------------------------

SynthCorpus synth_corpus(const Vocab& vocab, const SynthOptions& o) {
  const std::string filler = lowercase(o.filler);
  std::vector<std::string> content, background;
  std::size_t non_special = 0;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (vocab.is_special(static_cast<int>(id))) continue;
    ++non_special;
    const std::string& tok = vocab.token(static_cast<int>(id));
    if (tok.empty() || tok == filler || tok.starts_with("##")) continue;
    if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::islower(c); })) {
      continue;
    }
    (stopwords().contains(tok) ? background : content).push_back(tok);
  }
  if (non_special < 50 || content.size() < 4 || background.empty()) {
    throw DataError("vocabulary too small for synthesis: need >= 50 non-special tokens, "
                    ">= 4 content words and >= 1 stopword (have " +
                    std::to_string(non_special) + ", " + std::to_string(content.size()) +
                    ", " + std::to_string(background.size()) + ")");
  }
  if (o.tf_min < 0 || o.tf_max < o.tf_min) throw DataError("synth: bad tf range");
  if (o.background_max < o.background_min) throw DataError("synth: bad length range");

  SynthCorpus out;
  std::mt19937_64 rng(o.seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) { return lo + pick(rng, hi - lo + 1); };
  for (std::size_t qi = 0; qi < o.n_queries; ++qi) {
    const std::string qid = "q" + std::to_string(qi);
    std::vector<std::string> pool = content;
    const std::size_t n_terms = uniform(2, 4);
    std::vector<std::string> terms;
    for (std::size_t k = 0; k < n_terms; ++k) {
      const std::size_t j = k + pick(rng, pool.size() - k);
      std::swap(pool[k], pool[j]);
      terms.push_back(pool[k]);
    }
    std::string qtext;
    for (const auto& term : terms) qtext += (qtext.empty() ? "" : " ") + term;
    out.queries.push_back({qid, qtext});

    std::vector<std::pair<int, std::size_t>> ranking;  // (total tf, doc index)
    for (std::size_t di = 0; di < o.n_docs_per_query; ++di) {
      std::vector<std::string> words;
      int total_tf = 0;
      for (const auto& term : terms) {
        const int tf = static_cast<int>(uniform(static_cast<std::size_t>(o.tf_min),
                                                static_cast<std::size_t>(o.tf_max)));
        total_tf += tf;
        words.insert(words.end(), static_cast<std::size_t>(tf), term);
      }
      const std::size_t n_bg = uniform(o.background_min, o.background_max);
      for (std::size_t k = 0; k < n_bg; ++k)
        words.push_back(background[pick(rng, background.size())]);
      for (std::size_t k = words.size(); k > 1; --k) std::swap(words[k - 1], words[pick(rng, k)]);
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      out.corpus.push_back({qid + "_d" + std::to_string(di), text});
      ranking.emplace_back(total_tf, di);
    }
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      out.run.push_back({qid, qid + "_d" + std::to_string(ranking[r].second),
                         static_cast<int>(r + 1), static_cast<double>(ranking[r].first),
                         "synth"});
    }
  }
  return out;
}

}  // namespace axir
