#include "genderfuse/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "genderfuse/error.hpp"
#include "genderfuse/rng.hpp"

namespace genderfuse {

std::string_view signal_mode_name(SignalMode m) {
  switch (m) {
    case SignalMode::kWord: return "word";
    case SignalMode::kCharSuffix: return "char_suffix";
    case SignalMode::kPos: return "pos";
  }
  return "?";
}

SignalMode parse_signal_mode(std::string_view name) {
  if (name == "word") return SignalMode::kWord;
  if (name == "char_suffix") return SignalMode::kCharSuffix;
  if (name == "pos") return SignalMode::kPos;
  throw UsageError("unknown signal mode '" + std::string(name) +
                   "' (expected word, char_suffix or pos)");
}

void SynthSpec::validate() const {
  if (users_per_class == 0) throw UsageError("users_per_class must be positive");
  if (tweets_per_user == 0) throw UsageError("tweets_per_user must be positive");
  if (vocab_size < 10) throw UsageError("vocab_size must be at least 10");
  if (min_words == 0 || max_words < min_words) {
    throw UsageError("tweet length range must satisfy 1 <= min <= max");
  }
  if (!(marker_rate >= 0.0 && marker_rate <= 1.0)) throw UsageError("marker_rate must lie in [0, 1]");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw UsageError("noise_rate must lie in [0, 1]");
}

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprtvz";
constexpr std::string_view kVowels = "aeiou";

// Consonant-vowel syllables never repeat a letter three times, so the words
// pass through normalization unchanged.
std::string pseudo_word(Rng& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kConsonants[rng.below(kConsonants.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  return w;
}

std::string pick(Rng& rng, const std::vector<std::string>& items) {
  return items[rng.below(items.size())];
}

const std::vector<std::string> kPronouns{"i", "we", "they", "you"};
const std::vector<std::string> kModals{"will", "can", "must", "should"};
const std::vector<std::string> kVerbs{"go", "see", "make", "take", "win", "help", "try"};
const std::vector<std::string> kHashtags{"#hpv", "#Health", "#VACCINE", "#news", "#TBT"};
const std::vector<std::string> kEmoticons{":)", ":(", ";)", ":p", "<3", ":D"};

std::string noise_token(Rng& rng) {
  char buf[48];
  switch (rng.below(5)) {
    case 0: return pick(rng, kHashtags);
    case 1:
      std::snprintf(buf, sizeof buf, "http://t.co/%06llu",
                    static_cast<unsigned long long>(rng.below(1000000)));
      return buf;
    case 2:
      std::snprintf(buf, sizeof buf, "@user%llu", static_cast<unsigned long long>(rng.below(1000)));
      return buf;
    case 3:
      std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(rng.below(100)));
      return buf;
    default: return pick(rng, kEmoticons);
  }
}

}  // namespace

SynthLexicon synth_lexicon(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.lexicon_seed, 0x6c6578);
  SynthLexicon lex;
  std::unordered_set<std::string> used;
  auto fresh = [&](std::size_t syllables) {
    for (;;) {
      std::string w = pseudo_word(rng, syllables);
      if (used.insert(w).second) return w;
    }
  };
  for (std::size_t i = 0; i < spec.vocab_size; ++i) lex.words.push_back(fresh(2 + rng.below(2)));
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < 3; ++i) lex.markers[label].push_back(fresh(3));
  }
  // Consonant-final suffixes that none of the tagger's suffix rules match.
  lex.suffixes = {"vok", "zuf"};
  return lex;
}

Corpus gen_gender_corpus(const SynthSpec& spec) {
  const SynthLexicon lex = synth_lexicon(spec);
  Rng rng(spec.seed, 0x73796e);
  std::unordered_set<std::string> stems;
  auto unique_stem = [&] {
    for (;;) {
      std::string s = pseudo_word(rng, 3 + rng.below(2));
      if (stems.insert(s).second) return s;
    }
  };
  Corpus corpus;
  const std::size_t total = 2 * spec.users_per_class;
  for (std::size_t u = 0; u < total; ++u) {
    const int label = static_cast<int>(u % 2);
    UserRecord user;
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", u);
    user.user_id = spec.id_prefix + id;
    user.gender = gender_of_label(label);
    for (std::size_t t = 0; t < spec.tweets_per_user; ++t) {
      std::vector<std::string> words;
      const std::size_t n = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
      for (std::size_t i = 0; i < n; ++i) words.push_back(pick(rng, lex.words));
      if (rng.bernoulli(spec.marker_rate)) {
        std::string signal;
        switch (spec.mode) {
          case SignalMode::kWord: signal = pick(rng, lex.markers[label]); break;
          case SignalMode::kCharSuffix: signal = unique_stem() + lex.suffixes[label]; break;
          case SignalMode::kPos:
            if (label == 1) {
              signal = pick(rng, kPronouns) + " " + pick(rng, kModals) + " " + pick(rng, kVerbs);
            }
            break;
        }
        if (!signal.empty()) {
          const std::size_t at = rng.below(words.size() + 1);
          words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), signal);
        }
      }
      if (rng.bernoulli(spec.noise_rate)) {
        const std::size_t at = rng.below(words.size() + 1);
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), noise_token(rng));
      }
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      user.tweets.push_back(std::move(text));
    }
    corpus.push_back(std::move(user));
  }
  return corpus;
}

void StatsSynthSpec::validate() const {
  if (years.empty()) throw UsageError("at least one year is required");
  for (int y : years) {
    if (y <= 0) throw UsageError("years must be positive");
  }
  if (tweets_per_year == 0) throw UsageError("tweets_per_year must be positive");
  if (users < 2) throw UsageError("at least two users are required");
  if (!(male_fraction > 0.0 && male_fraction < 1.0)) {
    throw UsageError("male_fraction must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < kStatConstructCount; ++i) {
    if (!(p_male[i] >= 0.0 && p_male[i] <= 1.0 && p_female[i] >= 0.0 && p_female[i] <= 1.0)) {
      throw UsageError("construct rates must lie in [0, 1]");
    }
  }
}

double implied_odds_ratio(double p_male, double p_female) {
  return (p_male / (1.0 - p_male)) / (p_female / (1.0 - p_female));
}

LabeledSynth gen_labeled_tweets(const StatsSynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0x7374617473);
  LabeledSynth out;
  std::vector<std::string> ids;
  std::vector<Gender> genders;
  for (std::size_t u = 0; u < spec.users; ++u) {
    char id[32];
    std::snprintf(id, sizeof id, "h%06zu", u);
    ids.emplace_back(id);
    genders.push_back(rng.bernoulli(spec.male_fraction) ? Gender::kMale : Gender::kFemale);
    out.truth.emplace(ids.back(), genders.back());
  }
  // Both genders must be present for the tables to be defined.
  genders[0] = Gender::kFemale;
  genders[1] = Gender::kMale;
  out.truth[ids[0]] = Gender::kFemale;
  out.truth[ids[1]] = Gender::kMale;
  for (std::size_t i = 0; i < kStatConstructCount; ++i) {
    out.implied_or[i] = implied_odds_ratio(spec.p_male[i], spec.p_female[i]);
  }
  out.tweets.reserve(spec.years.size() * spec.tweets_per_year);
  std::size_t serial = 0;
  for (int year : spec.years) {
    for (std::size_t t = 0; t < spec.tweets_per_year; ++t) {
      const std::size_t u = rng.below(spec.users);
      const bool male = genders[u] == Gender::kMale;
      const auto& p = male ? spec.p_male : spec.p_female;
      LabeledTweet tw;
      tw.tweet_id = "t" + std::to_string(serial++);
      tw.user_id = ids[u];
      tw.year = year;
      for (std::size_t c = 0; c < kHbmConstructCount; ++c) tw.hbm[c] = rng.bernoulli(p[c]);
      if (rng.bernoulli(p[kStatConstructCount - 1])) {
        tw.tpb = Attitude::kPositive;
      } else {
        switch (rng.below(3)) {
          case 0: tw.tpb = Attitude::kNegative; break;
          case 1: tw.tpb = Attitude::kNeutral; break;
          default: break;
        }
      }
      out.tweets.push_back(std::move(tw));
    }
  }
  return out;
}

std::vector<GenderPrediction> predictions_from_truth(
    const std::unordered_map<std::string, Gender>& truth) {
  std::vector<GenderPrediction> out;
  for (const auto& [id, g] : truth) {
    GenderPrediction p;
    p.user_id = id;
    p.voted_gender = g;
    p.fold_probs = {1.0};
    p.avg_prob = 1.0;
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  return out;
}

}  // namespace genderfuse
