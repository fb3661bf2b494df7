#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genderfuse/corpus.hpp"

namespace genderfuse {

struct TextConfig {
  std::size_t max_token_chars = 20;
  std::size_t max_doc_tokens = 4000;
};

// Twitter normalization cascade: URLs, handles, emoticons, hearts, numbers,
// hashtags, repeated punctuation, elongations and all-caps words are replaced
// by or annotated with angle-bracket markers, then everything is lowercased
// and whitespace collapsed. Idempotent.
std::string normalize(std::string_view raw_tweet);

// Splits normalized text into tokens. Markers, emoticons and punctuation runs
// stay whole; punctuation attached to words is split off.
std::vector<std::string> tokenize(std::string_view normalized);

// True for `<letters>` marker tokens produced by normalize().
bool is_marker(std::string_view token);

// POS tagset ----------------------------------------------------------------

// Tag names indexed by tag id. Id 0 is the padding tag; the last two entries
// are MRK (normalization markers) and UNK.
const std::vector<std::string>& tagset();
std::int32_t tag_id(std::string_view tag);  // throws DataError when unknown
inline constexpr std::int32_t kPadTag = 0;
std::int32_t marker_tag();
std::int32_t unknown_tag();

// Lexicon + suffix heuristics tagger; one tag id per token.
std::vector<std::int32_t> pos_tag(std::span<const std::string> tokens);
std::vector<std::string> pos_tag_names(std::span<const std::string> tokens);

// Vocabulary ----------------------------------------------------------------

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::size_t kCharCount = 97;  // PAD, UNK, ASCII 32..126

  Vocab();
  // `words` excludes the reserved PAD/UNK entries; ids are assigned in order
  // starting at 2.
  explicit Vocab(std::vector<std::string> words);

  std::int32_t word_id(std::string_view word) const;
  static std::int32_t char_id(unsigned char c);

  std::size_t word_count() const { return words_.size() + 2; }
  std::size_t char_count() const { return kCharCount; }
  std::size_t tag_count() const { return tagset().size(); }
  const std::vector<std::string>& words() const { return words_; }
  // Surface for a word id (reserved ids render as <pad>/<unk>).
  std::string word(std::int32_t id) const;
  std::uint64_t fingerprint() const { return fingerprint_; }

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::uint64_t fingerprint_ = 0;
};

// Tokens and tags for one author before vocabulary lookup.
struct AnalyzedDoc {
  std::string user_id;
  std::vector<std::string> tokens;
  std::vector<std::int32_t> tags;
};

struct Token {
  std::string surface;
  std::int32_t word = Vocab::kUnk;
  std::vector<std::int32_t> chars;
  std::int32_t pos = kPadTag;
};

struct TokenizedDoc {
  std::string user_id;
  std::vector<Token> tokens;
  std::uint64_t vocab_fingerprint = 0;
};

// user_id -> one tag name per token of the built document.
using PosOverride = std::unordered_map<std::string, std::vector<std::string>>;
PosOverride read_pos_override(const std::filesystem::path& path);

// Normalizes, tokenizes and tags every tweet, concatenating in tweet order and
// truncating to max_doc_tokens. Throws DataError when nothing survives.
AnalyzedDoc analyze_user(const UserRecord& user, const TextConfig& config = {},
                         const PosOverride* overrides = nullptr);

// Words with frequency >= min_word_freq, ordered by descending frequency then
// lexicographically, so the result does not depend on document order.
Vocab build_vocab(std::span<const AnalyzedDoc> docs, std::size_t min_word_freq);
Vocab build_vocab(const Corpus& corpus, std::size_t min_word_freq,
                  const TextConfig& config = {});

TokenizedDoc encode(const AnalyzedDoc& doc, const Vocab& vocab,
                    const TextConfig& config = {});
TokenizedDoc build_doc(const UserRecord& user, const Vocab& vocab,
                       const TextConfig& config = {},
                       const PosOverride* overrides = nullptr);

}  // namespace genderfuse
