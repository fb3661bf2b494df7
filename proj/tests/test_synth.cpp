#include <algorithm>
#include <set>

#include "doctest.h"
#include "genderfuse/error.hpp"
#include "genderfuse/synth.hpp"
#include "genderfuse/textpipe.hpp"

using namespace genderfuse;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("gender corpora are deterministic, balanced and valid") {
  SynthSpec spec;
  spec.users_per_class = 20;
  spec.tweets_per_user = 6;
  spec.seed = 3;
  const Corpus a = gen_gender_corpus(spec);
  CHECK(a == gen_gender_corpus(spec));
  REQUIRE(a.size() == 40);
  CHECK_NOTHROW(validate_corpus(a));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].gender == gender_of_label(static_cast<int>(i % 2)));
    CHECK(a[i].tweets.size() == 6);
  }
  spec.seed = 4;
  CHECK(a != gen_gender_corpus(spec));
}

TEST_CASE("the lexicon depends only on the lexicon seed") {
  SynthSpec s1, s2;
  s1.seed = 1;
  s2.seed = 99;
  const auto l1 = synth_lexicon(s1), l2 = synth_lexicon(s2);
  CHECK(l1.words == l2.words);
  CHECK(l1.markers == l2.markers);
  s2.lexicon_seed = 5;
  CHECK(synth_lexicon(s2).words != l1.words);
  std::set<std::string> all(l1.words.begin(), l1.words.end());
  for (const auto& m : l1.markers) all.insert(m.begin(), m.end());
  CHECK(all.size() == l1.words.size() + 6);
}

TEST_CASE("each signal mode plants its class signal") {
  SynthSpec spec;
  spec.users_per_class = 10;
  spec.tweets_per_user = 20;
  spec.marker_rate = 1.0;
  spec.noise_rate = 0.0;
  const auto lex = synth_lexicon(spec);

  spec.mode = SignalMode::kWord;
  for (const auto& u : gen_gender_corpus(spec)) {
    const auto& own = lex.markers[label_of(*u.gender)];
    const auto& other = lex.markers[1 - label_of(*u.gender)];
    for (const auto& t : u.tweets) {
      const auto toks = tokenize(normalize(t));
      CHECK(std::any_of(toks.begin(), toks.end(), [&](const auto& w) {
        return std::find(own.begin(), own.end(), w) != own.end();
      }));
      CHECK(std::none_of(toks.begin(), toks.end(), [&](const auto& w) {
        return std::find(other.begin(), other.end(), w) != other.end();
      }));
    }
  }

  spec.mode = SignalMode::kCharSuffix;
  std::set<std::string> suffixed;
  for (const auto& u : gen_gender_corpus(spec)) {
    const std::string& own = lex.suffixes[label_of(*u.gender)];
    for (const auto& t : u.tweets) {
      std::size_t hits = 0;
      for (const auto& w : tokenize(normalize(t))) {
        if (ends_with(w, own) && std::find(lex.words.begin(), lex.words.end(), w) == lex.words.end()) {
          ++hits;
          CHECK(suffixed.insert(w).second);
        }
      }
      CHECK(hits >= 1);
    }
  }

  spec.mode = SignalMode::kPos;
  for (const auto& u : gen_gender_corpus(spec)) {
    std::size_t modals = 0;
    for (const auto& t : u.tweets)
      for (const auto& tag : pos_tag_names(tokenize(normalize(t)))) modals += tag == "MD" ? 1 : 0;
    if (*u.gender == Gender::kMale) {
      CHECK(modals >= u.tweets.size());
    } else {
      CHECK(modals == 0);
    }
  }
}

TEST_CASE("synthetic words survive normalization unchanged") {
  SynthSpec spec;
  spec.noise_rate = 0.0;
  spec.users_per_class = 3;
  for (const auto& u : gen_gender_corpus(spec))
    for (const auto& t : u.tweets) CHECK(normalize(t) == t);
}

TEST_CASE("labeled tweets match the requested shape and rates") {
  StatsSynthSpec spec;
  spec.years = {2014, 2015, 2016};
  spec.tweets_per_year = 30000;
  spec.users = 400;
  spec.seed = 8;
  const LabeledSynth s = gen_labeled_tweets(spec);
  CHECK(s.tweets.size() == 90000);
  CHECK(s.truth.size() == 400);
  CHECK(implied_odds_ratio(0.4, 0.25) == doctest::Approx(2.0));
  for (double v : s.implied_or) CHECK(v == doctest::Approx(2.0));
  std::size_t male = 0, male_sus = 0, female = 0, female_sus = 0;
  for (const auto& t : s.tweets) {
    const bool m = s.truth.at(t.user_id) == Gender::kMale;
    (m ? male : female) += 1;
    if (t.has(HbmConstruct::kSusceptibility)) (m ? male_sus : female_sus) += 1;
  }
  CHECK(static_cast<double>(male_sus) / male == doctest::Approx(0.4).epsilon(0.05));
  CHECK(static_cast<double>(female_sus) / female == doctest::Approx(0.25).epsilon(0.05));

  const auto preds = predictions_from_truth(s.truth);
  CHECK(std::is_sorted(preds.begin(), preds.end(),
                       [](const auto& a, const auto& b) { return a.user_id < b.user_id; }));
  for (const auto& p : preds) CHECK(p.fold_probs == std::vector<double>{1.0});
}

TEST_CASE("invalid specs are rejected") {
  SynthSpec s;
  s.marker_rate = 1.5;
  CHECK_THROWS_AS(gen_gender_corpus(s), UsageError);
  StatsSynthSpec t;
  t.male_fraction = 1.0;
  CHECK_THROWS_AS(gen_labeled_tweets(t), UsageError);
  CHECK_THROWS_AS(parse_signal_mode("morse"), UsageError);
}

}  // TEST_SUITE
