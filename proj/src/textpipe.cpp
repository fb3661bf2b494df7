#include "genderfuse/textpipe.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "genderfuse/error.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_alpha(char c) { return is_upper(c) || is_lower(c); }
bool is_word_byte(char c) {
  return is_alpha(c) || is_digit(c) || c == '_' || static_cast<unsigned char>(c) >= 0x80;
}
char lower(char c) { return is_upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals_prefix(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(s[pos + i]) != prefix[i]) return false;
  }
  return true;
}

bool boundary_before(std::string_view s, std::size_t pos) {
  return pos == 0 || !is_word_byte(s[pos - 1]);
}
bool boundary_after(std::string_view s, std::size_t end) {
  return end >= s.size() || !is_word_byte(s[end]);
}

// Each pass rewrites the whole string once. A matcher returns the match
// length at `pos` (0 for none) and fills the replacement.
template <typename Matcher>
std::string rewrite(std::string_view s, Matcher&& match) {
  std::string out;
  out.reserve(s.size() + 16);
  std::size_t i = 0;
  std::string repl;
  while (i < s.size()) {
    repl.clear();
    const std::size_t len = match(s, i, repl);
    if (len > 0) {
      out += repl;
      i += len;
    } else {
      out += s[i++];
    }
  }
  return out;
}

std::size_t match_url(std::string_view s, std::size_t i, std::string& repl) {
  if (!boundary_before(s, i)) return 0;
  std::size_t prefix = 0;
  if (iequals_prefix(s, i, "https://")) {
    prefix = 8;
  } else if (iequals_prefix(s, i, "http://")) {
    prefix = 7;
  } else if (iequals_prefix(s, i, "www.") && i + 4 < s.size() && is_word_byte(s[i + 4])) {
    prefix = 4;
  } else {
    return 0;
  }
  std::size_t end = i + prefix;
  while (end < s.size() && !is_space(s[end])) ++end;
  // Trailing sentence punctuation is not part of the link.
  while (end > i + prefix && std::string_view(".,!?;:)\"'").find(s[end - 1]) !=
                                 std::string_view::npos) {
    --end;
  }
  if (end == i + prefix) return 0;
  repl = " <url> ";
  return end - i;
}

std::size_t match_handle(std::string_view s, std::size_t i, std::string& repl) {
  if (s[i] != '@') return 0;
  std::size_t end = i + 1;
  while (end < s.size() && (is_alpha(s[end]) || is_digit(s[end]) || s[end] == '_')) ++end;
  if (end == i + 1) return 0;
  repl = " <user> ";
  return end - i;
}

bool is_eyes(char c) { return c == '8' || c == ':' || c == '=' || c == ';'; }
bool is_nose(char c) { return c == '\'' || c == '`' || c == '-'; }

std::size_t match_emoticon(std::string_view s, std::size_t i, std::string& repl) {
  const char c = s[i];
  // Forward faces: eyes, optional nose, mouth.
  if (is_eyes(c) && (c != '8' || boundary_before(s, i))) {
    std::size_t j = i + 1;
    if (j < s.size() && is_nose(s[j])) ++j;
    if (j < s.size()) {
      const char m = lower(s[j]);
      auto run = [&](auto pred) {
        std::size_t e = j;
        while (e < s.size() && pred(lower(s[e]))) ++e;
        return e;
      };
      std::size_t end = 0;
      const char* face = nullptr;
      bool letter_mouth = false;
      if (m == ')' || m == 'd') {
        end = run([](char x) { return x == ')' || x == 'd'; });
        face = " <smile> ";
        letter_mouth = (lower(s[end - 1]) == 'd');
      } else if (m == 'p') {
        end = run([](char x) { return x == 'p'; });
        face = " <lolface> ";
        letter_mouth = true;
      } else if (m == '(') {
        end = run([](char x) { return x == '('; });
        face = " <sadface> ";
      } else if (m == 'l') {
        end = run([](char x) { return x == 'l'; });
        face = " <neutralface> ";
        letter_mouth = true;
      } else if (m == '/' || m == '|' || m == '*') {
        end = j + 1;
        face = " <neutralface> ";
      }
      if (face != nullptr && (!letter_mouth || boundary_after(s, end))) {
        repl = face;
        return end - i;
      }
    }
  }
  // Reversed faces: mouth run, optional nose, eyes.
  if ((c == '(' || c == ')') && boundary_before(s, i)) {
    std::size_t j = i;
    while (j < s.size() && s[j] == c) ++j;
    if (j < s.size() && is_nose(s[j])) ++j;
    if (j < s.size() && is_eyes(s[j]) && (s[j] != '8' || boundary_after(s, j + 1))) {
      repl = c == '(' ? " <smile> " : " <sadface> ";
      return j + 1 - i;
    }
  }
  return 0;
}

std::size_t match_heart(std::string_view s, std::size_t i, std::string& repl) {
  if (s[i] == '<' && i + 1 < s.size() && s[i + 1] == '3') {
    repl = " <heart> ";
    return 2;
  }
  return 0;
}

// [-+]?[.\d]*\d+[:,.\d]*
std::size_t match_number(std::string_view s, std::size_t i, std::string& repl) {
  std::size_t j = i;
  if (s[j] == '-' || s[j] == '+') ++j;
  std::size_t k = j;
  bool digit = false;
  while (k < s.size() && (is_digit(s[k]) || s[k] == '.')) {
    digit = digit || is_digit(s[k]);
    ++k;
  }
  if (!digit) return 0;
  while (k < s.size() && (is_digit(s[k]) || s[k] == '.' || s[k] == ',' || s[k] == ':')) ++k;
  repl = "<number>";
  return k - i;
}

bool all_caps(std::string_view word) {
  bool any = false;
  for (char c : word) {
    if (is_lower(c)) return false;
    any = any || is_upper(c);
  }
  return any;
}

std::size_t match_hashtag(std::string_view s, std::size_t i, std::string& repl) {
  if (s[i] != '#') return 0;
  std::size_t j = i;
  while (j < s.size() && s[j] == '#') ++j;
  std::size_t end = j;
  while (end < s.size() && !is_space(s[end]) && s[end] != '#') ++end;
  if (end == j) return 0;
  const std::string_view body = s.substr(j, end - j);
  repl = " <hashtag> " + to_lower(body) + (all_caps(body) ? " <allcaps> " : " ");
  return end - i;
}

bool is_terminal(char c) { return c == '!' || c == '?' || c == '.'; }

std::size_t match_repeat(std::string_view s, std::size_t i, std::string& repl) {
  if (!is_terminal(s[i])) return 0;
  std::size_t end = i;
  while (end < s.size() && is_terminal(s[end])) ++end;
  if (end - i < 2) return 0;
  repl = std::string(" ") + s[end - 1] + " <repeat> ";
  return end - i;
}

std::size_t match_elongation(std::string_view s, std::size_t i, std::string& repl) {
  if (!is_alpha(s[i]) || (i > 0 && is_alpha(s[i - 1]))) return 0;
  std::size_t end = i;
  while (end < s.size() && is_alpha(s[end])) ++end;
  const char last = lower(s[end - 1]);
  std::size_t block = end;
  while (block > i && lower(s[block - 1]) == last) --block;
  if (end - block < 3) return 0;
  repl.assign(s.substr(i, block - i + 1));
  repl += " <elong> ";
  return end - i;
}

std::size_t match_allcaps(std::string_view s, std::size_t i, std::string& repl) {
  auto word_char = [](char c) { return is_alpha(c) || c == '\''; };
  if (!word_char(s[i]) || (i > 0 && word_char(s[i - 1]))) return 0;
  std::size_t end = i;
  std::size_t letters = 0;
  while (end < s.size() && word_char(s[end])) {
    if (is_alpha(s[end])) ++letters;
    ++end;
  }
  const std::string_view word = s.substr(i, end - i);
  if (letters < 2 || !all_caps(word)) return 0;
  repl = to_lower(word) + " <allcaps> ";
  return end - i;
}

std::string collapse_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += lower(c);
  }
  return out;
}

}  // namespace

namespace {

std::string cascade(std::string_view text) {
  std::string s = rewrite(text, match_url);
  s = rewrite(s, match_handle);
  s = rewrite(s, match_emoticon);
  s = rewrite(s, match_heart);
  s = rewrite(s, match_number);
  s = rewrite(s, match_hashtag);
  s = rewrite(s, match_repeat);
  s = rewrite(s, match_elongation);
  s = rewrite(s, match_allcaps);
  return collapse_lower(s);
}

}  // namespace

// Later rules can expose a word boundary that an earlier boundary-sensitive
// rule rejected ("10:30(:" only shows "(:" after the number is replaced), so
// the cascade is repeated until the text stops changing.
std::string normalize(std::string_view raw_tweet) {
  std::string s = cascade(raw_tweet);
  for (int round = 0; round < 8; ++round) {
    std::string next = cascade(s);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

bool is_marker(std::string_view token) {
  if (token.size() < 3 || token.front() != '<' || token.back() != '>') return false;
  for (std::size_t i = 1; i + 1 < token.size(); ++i) {
    if (!is_lower(token[i])) return false;
  }
  return true;
}

namespace {

std::size_t marker_length(std::string_view s, std::size_t i) {
  if (s[i] != '<') return 0;
  std::size_t j = i + 1;
  while (j < s.size() && is_lower(s[j])) ++j;
  if (j == i + 1 || j >= s.size() || s[j] != '>') return 0;
  return j + 1 - i;
}

// Emoticon starting with punctuation eyes; letter mouths need a boundary.
std::size_t emoticon_length(std::string_view s, std::size_t i) {
  if (!(s[i] == ':' || s[i] == ';' || s[i] == '=')) return 0;
  std::size_t j = i + 1;
  if (j < s.size() && is_nose(s[j])) ++j;
  if (j >= s.size()) return 0;
  const std::string_view mouths = ")(dDpP/|lL*";
  if (mouths.find(s[j]) == std::string_view::npos) return 0;
  std::size_t end = j;
  while (end < s.size() && mouths.find(s[end]) != std::string_view::npos) ++end;
  if (is_alpha(s[end - 1]) && !boundary_after(s, end)) {
    // Back off to the punctuation-only prefix of the mouth, if any.
    while (end > j && is_alpha(s[end - 1])) --end;
    if (end == j) return 0;
  }
  return end - i;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (std::size_t len = marker_length(text, i); len > 0) {
      tokens.emplace_back(text.substr(i, len));
      i += len;
      continue;
    }
    if (is_word_byte(text[i])) {
      std::size_t end = i;
      while (end < text.size() && is_word_byte(text[end])) ++end;
      while (end + 1 < text.size() && (text[end] == '\'' || text[end] == '-') &&
             is_word_byte(text[end + 1])) {
        ++end;
        while (end < text.size() && is_word_byte(text[end])) ++end;
      }
      tokens.emplace_back(text.substr(i, end - i));
      i = end;
      continue;
    }
    if (std::size_t len = emoticon_length(text, i); len > 0) {
      tokens.emplace_back(text.substr(i, len));
      i += len;
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && !is_space(text[end]) && !is_word_byte(text[end]) &&
           marker_length(text, end) == 0) {
      ++end;
    }
    tokens.emplace_back(text.substr(i, end - i));
    i = end;
  }
  return tokens;
}

// Vocab ----------------------------------------------------------------------

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  std::uint64_t h = fnv1a("genderfuse-vocab-v1\n");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    auto [it, inserted] = index_.emplace(words_[i], static_cast<std::int32_t>(i + 2));
    if (!inserted) throw DataError("duplicate vocabulary word '" + words_[i] + "'");
    h = fnv1a(words_[i], h);
    h = fnv1a("\n", h);
  }
  h = fnv1a("chars:ascii32-126\ntags:", h);
  for (const auto& t : tagset()) h = fnv1a(t + " ", h);
  fingerprint_ = h;
}

std::int32_t Vocab::word_id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::int32_t Vocab::char_id(unsigned char c) {
  if (c >= 32 && c <= 126) return static_cast<std::int32_t>(c - 32 + 2);
  return kUnk;
}

std::string Vocab::word(std::int32_t id) const {
  if (id == kPad) return "<pad>";
  if (id == kUnk || id < 0 || static_cast<std::size_t>(id) >= word_count()) return "<unk>";
  return words_[static_cast<std::size_t>(id - 2)];
}

PosOverride read_pos_override(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  PosOverride out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      out[obj.at("user_id").get<std::string>()] =
          obj.at("tags").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

AnalyzedDoc analyze_user(const UserRecord& user, const TextConfig& config,
                         const PosOverride* overrides) {
  AnalyzedDoc doc;
  doc.user_id = user.user_id;
  for (const auto& tweet : user.tweets) {
    if (doc.tokens.size() >= config.max_doc_tokens) break;
    auto tokens = tokenize(normalize(tweet));
    auto tags = pos_tag(tokens);
    const std::size_t room = config.max_doc_tokens - doc.tokens.size();
    const std::size_t take = std::min(room, tokens.size());
    doc.tokens.insert(doc.tokens.end(), std::make_move_iterator(tokens.begin()),
                      std::make_move_iterator(tokens.begin() + static_cast<std::ptrdiff_t>(take)));
    doc.tags.insert(doc.tags.end(), tags.begin(), tags.begin() + static_cast<std::ptrdiff_t>(take));
  }
  if (doc.tokens.empty()) {
    throw DataError("user '" + user.user_id + "' has no tokens after preprocessing");
  }
  if (overrides != nullptr) {
    if (auto it = overrides->find(user.user_id); it != overrides->end()) {
      if (it->second.size() != doc.tokens.size()) {
        throw DataError("POS override for '" + user.user_id + "' has " +
                        std::to_string(it->second.size()) + " tags for " +
                        std::to_string(doc.tokens.size()) + " tokens");
      }
      for (std::size_t i = 0; i < doc.tags.size(); ++i) doc.tags[i] = tag_id(it->second[i]);
    }
  }
  return doc;
}

Vocab build_vocab(std::span<const AnalyzedDoc> docs, std::size_t min_word_freq) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& d : docs) {
    for (const auto& t : d.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, n] : freq) {
    if (n >= min_word_freq) kept.emplace_back(w, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(std::move(w));
  return Vocab(std::move(words));
}

Vocab build_vocab(const Corpus& corpus, std::size_t min_word_freq, const TextConfig& config) {
  std::vector<AnalyzedDoc> docs;
  docs.reserve(corpus.size());
  for (const auto& u : corpus) docs.push_back(analyze_user(u, config));
  return build_vocab(docs, min_word_freq);
}

TokenizedDoc encode(const AnalyzedDoc& doc, const Vocab& vocab, const TextConfig& config) {
  TokenizedDoc out;
  out.user_id = doc.user_id;
  out.vocab_fingerprint = vocab.fingerprint();
  out.tokens.reserve(doc.tokens.size());
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    Token t;
    t.surface = doc.tokens[i];
    t.word = vocab.word_id(t.surface);
    const std::size_t n = std::min(t.surface.size(), config.max_token_chars);
    t.chars.reserve(n);
    for (std::size_t c = 0; c < n; ++c) {
      t.chars.push_back(Vocab::char_id(static_cast<unsigned char>(t.surface[c])));
    }
    t.pos = doc.tags[i];
    out.tokens.push_back(std::move(t));
  }
  return out;
}

TokenizedDoc build_doc(const UserRecord& user, const Vocab& vocab, const TextConfig& config,
                       const PosOverride* overrides) {
  return encode(analyze_user(user, config, overrides), vocab, config);
}

}  // namespace genderfuse
