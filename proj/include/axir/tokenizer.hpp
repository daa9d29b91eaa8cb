#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace axir {

class Vocab {
 public:
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kPad = "[PAD]";

  /// One token per line; line number is the id. Throws DataError when a
  /// special token is missing or a token repeats.
  explicit Vocab(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::optional<int> find(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int cls() const { return cls_; }
  int sep() const { return sep_; }
  int unk() const { return unk_; }
  int pad() const { return pad_; }
  bool is_special(int id) const { return id == cls_ || id == sep_ || id == unk_ || id == pad_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int cls_ = -1, sep_ = -1, unk_ = -1, pad_ = -1;
};

enum class TokenizerMode { WordPiece, Whitespace };

/// Half-open piece range [begin, end) for one source word.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Token stream for one text. Position 0 is CLS and the last position is
/// SEP; word spans index into ids/pieces and cover every piece in between.
struct TokenizedText {
  std::vector<int> ids;
  std::vector<std::string> pieces;
  std::vector<WordSpan> word_spans;
  // Normalized surface form of each source word (parallel to word_spans).
  std::vector<std::string> words;

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const TokenizedText&, const TokenizedText&) = default;
};

/// Lowercased whitespace + punctuation split (the BERT basic tokenizer
/// without accent stripping or CJK handling).
std::vector<std::string> split_words(const std::string& text);

class Tokenizer {
 public:
  static constexpr std::size_t kMaxWordChars = 100;

  Tokenizer(Vocab vocab, TokenizerMode mode) : vocab_(std::move(vocab)), mode_(mode) {}

  const Vocab& vocab() const { return vocab_; }
  TokenizerMode mode() const { return mode_; }

  TokenizedText tokenize(const std::string& text) const;

  /// Pieces for one already-normalized word.
  std::vector<std::pair<int, std::string>> word_pieces(const std::string& word) const;

  /// Builds a TokenizedText from words, wrapping with CLS/SEP.
  TokenizedText from_words(const std::vector<std::string>& words) const;

 private:
  Vocab vocab_;
  TokenizerMode mode_;
};

/// Joins pieces back into text: specials dropped, "##" pieces glued to the
/// previous piece, words separated by single spaces.
std::string detokenize(const TokenizedText& text, const Vocab& vocab);

}  // namespace axir
