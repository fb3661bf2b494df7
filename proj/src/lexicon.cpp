// Rule-based part-of-speech tagger: a closed lexicon of frequent English
// words with their majority tag, ordered suffix heuristics for everything
// else, and NN as the final fallback.

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <unordered_map>

#include "genderfuse/error.hpp"
#include "genderfuse/textpipe.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

namespace {

const std::vector<std::string>& build_tagset() {
  static const std::vector<std::string> tags = {
      "<pad>", "CC",  "CD",  "DT",   "EX",  "FW",  "IN",  "JJ",    "JJR",   "JJS",
      "LS",    "MD",  "NN",  "NNS",  "NNP", "NNPS", "PDT", "POS",  "PRP",   "PRP$",
      "RB",    "RBR", "RBS", "RP",   "SYM", "TO",  "UH",  "VB",    "VBD",   "VBG",
      "VBN",   "VBP", "VBZ", "WDT",  "WP",  "WP$", "WRB", "#",     "$",     "''",
      "``",    ",",   "-LRB-", "-RRB-", ".", ":",  "MRK", "UNK"};
  return tags;
}

struct LexGroup {
  const char* tag;
  const char* words;
};

// Majority tags for frequent words (lowercased, tweet register).
constexpr LexGroup kLexicon[] = {
    {"DT", "the a an this that these those every each some any no all another either "
           "neither"},
    {"PDT", "both half"},
    {"CC", "and or but nor yet plus &"},
    {"IN", "of in on at by for with from about into over after before under between "
           "through during without within against among around since until upon like "
           "than because if while though although whether near across behind beyond "
           "towards toward via per despite unless except outside inside"},
    {"TO", "to"},
    {"EX", "there"},
    {"PRP", "i you he she it we they me him her us them myself yourself himself "
            "herself itself ourselves themselves u ya"},
    {"PRP$", "my your his its our their ur"},
    {"WP", "who what whom whoever whatever"},
    {"WP$", "whose"},
    {"WDT", "which"},
    {"WRB", "when where why how whenever wherever"},
    {"MD", "can could will would shall should may might must can't won't couldn't "
           "wouldn't shouldn't cannot gonna wanna gotta ll"},
    {"RB", "not n't never always often sometimes usually just very really so too also "
           "only even still already again ever here now then soon today tonight "
           "tomorrow yesterday maybe perhaps almost quite rather actually literally "
           "definitely probably seriously totally pretty well away back out up down "
           "off once twice together forever lol omg asap yet else ago anymore"},
    {"RBR", "more less better worse"},
    {"RBS", "most least best worst"},
    {"UH", "oh yes yeah yep no nope hey hi hello wow ok okay please thanks thank "
           "haha hahaha lmao ugh yay oops hmm aww ah"},
    {"VB", "be do have go get make know think take see come want look use find give "
           "tell work call try ask need feel become leave put mean keep let begin seem "
           "help talk turn start show hear play run move live believe hold bring "
           "happen write provide sit stand lose pay meet include continue set learn "
           "change lead understand watch follow stop create speak read allow add "
           "spend grow open walk win offer remember love consider appear buy wait "
           "serve die send expect build stay fall cut reach kill remain suggest "
           "raise pass sell require report decide pull eat sleep sing dance vote "
           "vaccinate protect prevent"},
    {"VBP", "am are 're 've don't have do"},
    {"VBZ", "is 's has does doesn't isn't hasn't"},
    {"VBD", "was were had did said went got made knew thought took saw came wanted "
            "looked used found gave told worked called tried asked needed felt became "
            "left put meant kept let began seemed helped talked turned started showed "
            "heard played ran moved lived believed held brought happened wrote sat "
            "stood lost paid met ate slept sang danced voted wasn't weren't didn't "
            "hadn't loved"},
    {"VBN", "been done gone known taken seen given written eaten spoken broken chosen "
            "driven fallen forgotten hidden shown grown thrown born"},
    {"VBG", "being having doing going getting making"},
    {"JJ", "good new first last long great little own other old right big high "
           "different small large next early young important few public bad same able "
           "free sure real happy sad cute nice beautiful amazing awesome funny cool "
           "hot cold true whole full best-ever crazy stupid tired excited sick safe "
           "healthy dangerous effective several many much such"},
    {"JJR", "bigger smaller older younger higher lower larger greater easier harder "
            "faster"},
    {"JJS", "biggest smallest oldest youngest highest lowest largest greatest easiest "
            "hardest fastest"},
    {"NN", "time person year way day thing man world life hand part child eye woman "
           "place week case point government company number group problem fact "
           "home night school mom dad girl boy guy baby friend family love today "
           "morning game music movie phone food money job team health vaccine cancer "
           "doctor shot news people"},
    {"NNS", "people children men women years days things kids friends guys girls "
            "boys vaccines parents doctors"},
    {"CD", "one two three four five six seven eight nine ten hundred thousand million"},
    {"POS", "'s"},
    {"RP", "upon"},
};

struct Lexicon {
  std::unordered_map<std::string, std::int32_t> tags;
  Lexicon() {
    for (const auto& group : kLexicon) {
      const std::int32_t id = tag_id(group.tag);
      for (const auto& w : split(group.words, ' ')) {
        if (!w.empty()) tags.emplace(w, id);  // first group wins
      }
    }
  }
};

const Lexicon& lexicon() {
  static const Lexicon lex;
  return lex;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool has_alnum(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           static_cast<unsigned char>(c) >= 0x80;
  });
}

bool is_number(std::string_view s) {
  bool digit = false;
  for (char c : s) {
    if (c >= '0' && c <= '9') {
      digit = true;
    } else if (c != '.' && c != ',' && c != ':' && c != '-' && c != '+') {
      return false;
    }
  }
  return digit;
}

std::int32_t punct_tag(std::string_view tok) {
  static const std::int32_t period = tag_id(".");
  static const std::int32_t comma = tag_id(",");
  static const std::int32_t colon = tag_id(":");
  static const std::int32_t lrb = tag_id("-LRB-");
  static const std::int32_t rrb = tag_id("-RRB-");
  static const std::int32_t close_quote = tag_id("''");
  static const std::int32_t open_quote = tag_id("``");
  static const std::int32_t hash = tag_id("#");
  static const std::int32_t dollar = tag_id("$");
  static const std::int32_t sym = tag_id("SYM");
  if (std::all_of(tok.begin(), tok.end(), [](char c) { return c == '.' || c == '!' || c == '?'; })) {
    return period;
  }
  if (tok == ",") return comma;
  if (tok == ":" || tok == ";" || tok == "-" || tok == "--" || tok == "...") return colon;
  if (tok == "(" || tok == "[" || tok == "{") return lrb;
  if (tok == ")" || tok == "]" || tok == "}") return rrb;
  if (tok == "\"" || tok == "''" || tok == "'") return close_quote;
  if (tok == "``") return open_quote;
  if (tok == "#") return hash;
  if (tok == "$") return dollar;
  return sym;
}

struct SuffixRule {
  std::string_view suffix;
  const char* tag;
};

// Checked in order; longer and more specific suffixes first.
constexpr SuffixRule kSuffixRules[] = {
    {"tastic", "JJ"}, {"ness", "NN"}, {"ment", "NN"},  {"tion", "NN"}, {"sion", "NN"},
    {"ship", "NN"},   {"ity", "NN"},  {"ism", "NN"},   {"ist", "NN"},  {"ance", "NN"},
    {"ence", "NN"},   {"ing", "VBG"}, {"ous", "JJ"},   {"ful", "JJ"},  {"ive", "JJ"},
    {"able", "JJ"},   {"ible", "JJ"}, {"less", "JJ"},  {"ish", "JJ"},  {"ical", "JJ"},
    {"ic", "JJ"},     {"est", "JJS"}, {"ly", "RB"},    {"ize", "VB"},  {"ise", "VB"},
    {"ify", "VB"},    {"ed", "VBD"},
};

}  // namespace

const std::vector<std::string>& tagset() { return build_tagset(); }

std::int32_t tag_id(std::string_view tag) {
  static const auto index = [] {
    std::unordered_map<std::string, std::int32_t> m;
    const auto& tags = build_tagset();
    for (std::size_t i = 0; i < tags.size(); ++i) m.emplace(tags[i], static_cast<std::int32_t>(i));
    return m;
  }();
  auto it = index.find(std::string(tag));
  if (it == index.end()) throw DataError("unknown POS tag '" + std::string(tag) + "'");
  return it->second;
}

std::int32_t marker_tag() {
  static const std::int32_t id = tag_id("MRK");
  return id;
}

std::int32_t unknown_tag() {
  static const std::int32_t id = tag_id("UNK");
  return id;
}

std::vector<std::int32_t> pos_tag(std::span<const std::string> tokens) {
  static const std::int32_t nn = tag_id("NN");
  static const std::int32_t nnp = tag_id("NNP");
  static const std::int32_t nns = tag_id("NNS");
  static const std::int32_t prp = tag_id("PRP");
  static const std::int32_t vb = tag_id("VB");
  static const std::int32_t vbd = tag_id("VBD");
  static const std::int32_t vbn = tag_id("VBN");
  static const std::int32_t vbz = tag_id("VBZ");
  static const std::int32_t vbp = tag_id("VBP");
  static const std::int32_t md = tag_id("MD");
  static const std::int32_t to = tag_id("TO");
  static const std::int32_t cd = tag_id("CD");
  static const std::int32_t wp = tag_id("WP");

  const auto& lex = lexicon().tags;
  auto lookup = [&](const std::string& w) -> std::int32_t {
    auto it = lex.find(to_lower(w));
    return it == lex.end() ? -1 : it->second;
  };
  auto is_aux = [](const std::string& w) {
    static const std::array<std::string_view, 10> aux = {
        "have", "has", "had", "was", "were", "been", "be", "is", "are", "being"};
    const std::string l = to_lower(w);
    return std::find(aux.begin(), aux.end(), l) != aux.end();
  };

  std::vector<std::int32_t> tags(tokens.size(), nn);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    const std::int32_t prev = i > 0 ? tags[i - 1] : -1;
    if (is_marker(tok)) {
      tags[i] = marker_tag();
      continue;
    }
    if (!has_alnum(tok)) {
      tags[i] = punct_tag(tok);
      continue;
    }
    if (is_number(tok)) {
      tags[i] = cd;
      continue;
    }
    if (std::int32_t t = lookup(tok); t >= 0) {
      // Base-form verbs after modals and infinitival "to".
      if ((prev == md || prev == to) && t == vbp) t = vb;
      if (prev == prp && t == vb) t = vbp;
      tags[i] = t;
      continue;
    }
    const std::string w = to_lower(tok);
    // Plural noun vs third-person verb for -s words.
    if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
        !ends_with(w, "is")) {
      const std::string stem = w.substr(0, w.size() - 1);
      const std::string es_stem = ends_with(w, "es") ? w.substr(0, w.size() - 2) : std::string();
      const std::int32_t st = lookup(stem);
      const std::int32_t est = es_stem.empty() ? -1 : lookup(es_stem);
      const bool verb_stem = st == vb || st == vbp || est == vb;
      const bool subject_before = prev == nn || prev == nnp || prev == prp || prev == wp;
      tags[i] = (verb_stem || subject_before) ? vbz : nns;
      continue;
    }
    std::int32_t tagged = -1;
    for (const auto& rule : kSuffixRules) {
      if (ends_with(w, rule.suffix)) {
        tagged = tag_id(rule.tag);
        break;
      }
    }
    if (tagged == vbd && i > 0 && is_aux(tokens[i - 1])) tagged = vbn;
    if (tagged == -1 && prev == md) tagged = vb;
    tags[i] = tagged >= 0 ? tagged : nn;
  }
  return tags;
}

std::vector<std::string> pos_tag_names(std::span<const std::string> tokens) {
  std::vector<std::string> names;
  for (std::int32_t id : pos_tag(tokens)) names.push_back(tagset()[static_cast<std::size_t>(id)]);
  return names;
}

}  // namespace genderfuse
