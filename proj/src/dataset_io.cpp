#include "axir/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "axir/error.hpp"

namespace axir {

namespace {

nlohmann::json text_to_json(const TokenizedText& t) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : t.word_spans) spans.push_back({s.begin, s.end});
  return {{"ids", t.ids}, {"pieces", t.pieces}, {"word_spans", spans}, {"words", t.words}};
}

TokenizedText text_from_json(const nlohmann::json& j) {
  TokenizedText t;
  t.ids = j.at("ids").get<std::vector<int>>();
  t.pieces = j.at("pieces").get<std::vector<std::string>>();
  for (const auto& s : j.at("word_spans")) t.word_spans.push_back({s.at(0), s.at(1)});
  t.words = j.at("words").get<std::vector<std::string>>();
  if (t.ids.size() != t.pieces.size() || t.word_spans.size() != t.words.size()) {
    throw DataError("tokenized text: inconsistent field lengths");
  }
  return t;
}

nlohmann::json spans_to_json(const std::vector<WordSpan>& spans) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : spans) out.push_back({s.begin, s.end});
  return out;
}

std::vector<WordSpan> spans_from_json(const nlohmann::json& j) {
  std::vector<WordSpan> out;
  for (const auto& s : j) out.push_back({s.at(0), s.at(1)});
  return out;
}

nlohmann::json types_to_json(const std::vector<TokenType>& types) {
  nlohmann::json out = nlohmann::json::array();
  for (auto t : types) out.push_back(to_string(t));
  return out;
}

std::vector<TokenType> types_from_json(const nlohmann::json& j) {
  std::vector<TokenType> out;
  for (const auto& s : j) out.push_back(parse_token_type(s.get<std::string>()));
  return out;
}

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << contents;
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<TextRecord> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<TextRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>text");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

void write_tsv(const std::filesystem::path& path, const std::vector<TextRecord>& records) {
  std::string s;
  for (const auto& r : records) s += r.id + "\t" + r.text + "\n";
  write_file(path, s);
}

std::vector<RunEntry> read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<RunEntry> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    RunEntry e;
    std::string q0;
    if (!(ss >> e.qid >> q0 >> e.docid >> e.rank >> e.score)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected `qid Q0 docid rank score tag`");
    }
    ss >> e.tag;
    out.push_back(std::move(e));
  }
  return out;
}

void write_run(const std::filesystem::path& path, const std::vector<RunEntry>& run) {
  std::ostringstream s;
  s.precision(17);
  for (const auto& e : run) {
    s << e.qid << " Q0 " << e.docid << ' ' << e.rank << ' ' << e.score << ' '
      << (e.tag.empty() ? "axir" : e.tag) << '\n';
  }
  write_file(path, s.str());
}

nlohmann::json triple_to_json(const DiagnosticTriple& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["qid"] = t.qid;
  j["docid"] = t.docid;
  j["query_text"] = t.query_text;
  j["query_ids"] = text_to_json(t.query);
  j["baseline_ids"] = text_to_json(t.baseline);
  j["perturbed_ids"] = text_to_json(t.perturbed);
  j["selected_term"] = t.selected_term;
  j["selected_term_pieces"] = t.selected_term_pieces;
  j["kind"] = to_string(t.kind);
  j["location"] = to_string(t.location);
  j["expected_higher"] = to_string(t.expected_higher);
  j["injected_spans"] = spans_to_json(t.injected_spans);
  j["filler_spans"] = spans_to_json(t.filler_spans);
  j["token_types_baseline"] = types_to_json(t.types_baseline);
  j["token_types_perturbed"] = types_to_json(t.types_perturbed);
  j["term_in_original"] = t.term_in_original;
  j["candidate_rank"] = opt(t.candidate_rank);
  j["doc_score"] = opt(t.doc_score);
  j["s_baseline"] = opt(t.s_baseline);
  j["s_perturbed"] = opt(t.s_perturbed);
  j["direction_contradiction"] = t.direction_contradiction;
  j["seed"] = t.seed;
  return j;
}

DiagnosticTriple triple_from_json(const nlohmann::json& j) {
  DiagnosticTriple t;
  try {
    t.id = j.at("id").get<std::string>();
    t.qid = j.at("qid").get<std::string>();
    t.docid = j.at("docid").get<std::string>();
    t.query_text = j.at("query_text").get<std::string>();
    t.query = text_from_json(j.at("query_ids"));
    t.baseline = text_from_json(j.at("baseline_ids"));
    t.perturbed = text_from_json(j.at("perturbed_ids"));
    t.selected_term = j.at("selected_term").get<std::string>();
    t.selected_term_pieces = j.at("selected_term_pieces").get<std::vector<int>>();
    t.kind = parse_kind(j.at("kind").get<std::string>());
    t.location = parse_location(j.at("location").get<std::string>());
    t.expected_higher = parse_expected_higher(j.at("expected_higher").get<std::string>());
    t.injected_spans = spans_from_json(j.at("injected_spans"));
    t.filler_spans = spans_from_json(j.at("filler_spans"));
    t.types_baseline = types_from_json(j.at("token_types_baseline"));
    t.types_perturbed = types_from_json(j.at("token_types_perturbed"));
    t.term_in_original = j.value("term_in_original", false);
    t.candidate_rank = opt_from<int>(j, "candidate_rank");
    t.doc_score = opt_from<float>(j, "doc_score");
    t.s_baseline = opt_from<float>(j, "s_baseline");
    t.s_perturbed = opt_from<float>(j, "s_perturbed");
    t.direction_contradiction = j.value("direction_contradiction", false);
    t.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset record: ") + e.what());
  }
  if (t.baseline.size() != t.perturbed.size()) {
    throw DataError("triple " + t.id + ": baseline and perturbed lengths differ");
  }
  if (t.types_baseline.size() != t.baseline.size() ||
      t.types_perturbed.size() != t.perturbed.size()) {
    throw DataError("triple " + t.id + ": token-type labels do not cover every position");
  }
  return t;
}

void write_dataset(const std::filesystem::path& path,
                   const std::vector<DiagnosticTriple>& triples) {
  std::string s;
  for (const auto& t : triples) s += triple_to_json(t).dump() + "\n";
  write_file(path, s);
}

std::vector<DiagnosticTriple> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  std::vector<DiagnosticTriple> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(triple_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace axir
