#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genderfuse/corpus.hpp"
#include "genderfuse/stats.hpp"

namespace genderfuse {

// Where the class signal lives in a synthetic gender corpus.
enum class SignalMode {
  kWord,        // class-specific marker words
  kCharSuffix,  // one-off words carrying a class-specific suffix
  kPos,         // one class over-uses a pronoun + modal + verb template
};
std::string_view signal_mode_name(SignalMode m);
SignalMode parse_signal_mode(std::string_view name);

struct SynthSpec {
  std::size_t users_per_class = 200;
  std::size_t tweets_per_user = 20;
  std::size_t vocab_size = 500;
  std::size_t min_words = 5;
  std::size_t max_words = 10;
  double marker_rate = 0.3;  // per tweet
  double noise_rate = 0.2;   // per tweet: hashtag, URL, handle, number or emoticon
  SignalMode mode = SignalMode::kWord;
  std::uint64_t seed = 0;
  // Seeds the shared lexicon and marker words, so corpora drawn with
  // different sampling seeds still share a vocabulary.
  std::uint64_t lexicon_seed = 0;
  std::string id_prefix = "u";

  void validate() const;
};

// The shared filler lexicon and the per-class marker words of a spec.
struct SynthLexicon {
  std::vector<std::string> words;
  std::array<std::vector<std::string>, 2> markers;  // indexed by label
  std::array<std::string, 2> suffixes;               // indexed by label
};
SynthLexicon synth_lexicon(const SynthSpec& spec);

// Users alternate female, male; deterministic per spec.
Corpus gen_gender_corpus(const SynthSpec& spec);

struct StatsSynthSpec {
  std::vector<int> years{2014, 2015, 2016, 2017, 2018};
  std::size_t tweets_per_year = 100000;
  std::size_t users = 5000;
  double male_fraction = 0.5;
  // Per-construct membership rates in StatConstruct order.
  std::array<double, kStatConstructCount> p_male{0.4, 0.4, 0.4, 0.4, 0.4};
  std::array<double, kStatConstructCount> p_female{0.25, 0.25, 0.25, 0.25, 0.25};
  std::uint64_t seed = 0;

  void validate() const;
};

// (p_m / (1 - p_m)) / (p_f / (1 - p_f))
double implied_odds_ratio(double p_male, double p_female);

struct LabeledSynth {
  std::vector<LabeledTweet> tweets;
  std::unordered_map<std::string, Gender> truth;
  std::array<double, kStatConstructCount> implied_or{};
};

LabeledSynth gen_labeled_tweets(const StatsSynthSpec& spec);

// Certain single-member predictions (fold_probs = {1}) from a truth map,
// ordered by user id.
std::vector<GenderPrediction> predictions_from_truth(
    const std::unordered_map<std::string, Gender>& truth);

}  // namespace genderfuse
