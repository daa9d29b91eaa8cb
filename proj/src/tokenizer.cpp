#include "axir/tokenizer.hpp"

#include <cctype>
#include <fstream>

#include "axir/error.hpp"

namespace axir {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

// Number of UTF-8 code points; used for the per-word length guard.
std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, fresh] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!fresh) throw DataError("vocab: duplicate token '" + tokens_[i] + "'");
  }
  auto special = [&](const char* name) {
    auto id = find(name);
    if (!id) throw DataError(std::string("vocab: missing special token ") + name);
    return *id;
  };
  cls_ = special(kCls);
  sep_ = special(kSep);
  unk_ = special(kUnk);
  pad_ = special(kPad);
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab: " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<int> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return words;
}

std::vector<std::pair<int, std::string>> Tokenizer::word_pieces(const std::string& word) const {
  const auto unk = std::vector<std::pair<int, std::string>>{{vocab_.unk(), Vocab::kUnk}};
  if (mode_ == TokenizerMode::Whitespace) {
    auto id = vocab_.find(word);
    if (!id) return unk;
    return {{*id, word}};
  }
  if (utf8_length(word) > kMaxWordChars) return unk;

  // Greedy longest-match-first; continuation pieces carry the "##" prefix.
  std::vector<std::pair<int, std::string>> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::optional<std::pair<int, std::string>> match;
    while (start < end) {
      std::string candidate = word.substr(start, end - start);
      if (start > 0) candidate = "##" + candidate;
      if (auto id = vocab_.find(candidate)) {
        match.emplace(*id, std::move(candidate));
        break;
      }
      // Step back one UTF-8 code point.
      do {
        --end;
      } while (end > start && (static_cast<unsigned char>(word[end]) & 0xC0) == 0x80);
    }
    if (!match) return unk;
    pieces.push_back(std::move(*match));
    start = end;
  }
  return pieces;
}

TokenizedText Tokenizer::from_words(const std::vector<std::string>& words) const {
  TokenizedText out;
  out.ids.push_back(vocab_.cls());
  out.pieces.emplace_back(Vocab::kCls);
  for (const auto& w : words) {
    const std::size_t begin = out.ids.size();
    for (auto& [id, piece] : word_pieces(w)) {
      out.ids.push_back(id);
      out.pieces.push_back(std::move(piece));
    }
    out.word_spans.push_back({begin, out.ids.size()});
    out.words.push_back(w);
  }
  out.ids.push_back(vocab_.sep());
  out.pieces.emplace_back(Vocab::kSep);
  return out;
}

TokenizedText Tokenizer::tokenize(const std::string& text) const {
  if (mode_ == TokenizerMode::Whitespace) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
      if (std::isspace(c)) {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
      }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return from_words(words);
  }
  return from_words(split_words(text));
}

std::string detokenize(const TokenizedText& text, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < text.ids.size(); ++i) {
    if (text.ids[i] == vocab.cls() || text.ids[i] == vocab.sep() ||
        text.ids[i] == vocab.pad()) {
      continue;
    }
    const std::string& piece = text.pieces[i];
    if (piece.starts_with("##")) {
      out += piece.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += piece;
    }
  }
  return out;
}

}  // namespace axir
