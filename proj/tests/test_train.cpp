#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "genderfuse/error.hpp"
#include "genderfuse/synth.hpp"
#include "genderfuse/train.hpp"
#include "genderfuse/verify.hpp"
#include "test_support.hpp"

using namespace genderfuse;

namespace {

PreparedCorpus small_corpus(std::uint64_t seed, std::size_t per_class = 8) {
  SynthSpec spec;
  spec.users_per_class = per_class;
  spec.tweets_per_user = 4;
  spec.seed = seed;
  return prepare_corpus(gen_gender_corpus(spec), 2);
}

ArchConfig small_arch() {
  ArchConfig a = tiny_arch();
  a.lr = 0.01;
  return a;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("best epoch is the 1-based first argmax of the trace") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> trace(1 + rng.below(12));
    for (auto& v : trace) v = static_cast<double>(rng.below(5)) / 4.0;
    std::size_t expect = 0;
    for (std::size_t i = 1; i < trace.size(); ++i)
      if (trace[i] > trace[expect]) expect = i;
    CHECK(best_epoch(trace) == expect + 1);
  }
  CHECK_THROWS(best_epoch(std::vector<double>{}));
}

TEST_CASE("votes follow the majority, then summed probability, then female") {
  using P = std::array<double, 2>;
  const std::vector<P> majority = {{0.2, 0.8}, {0.4, 0.6}, {0.9, 0.1}};
  const auto m = vote("u", majority);
  CHECK(m.voted_gender == Gender::kMale);
  CHECK(m.fold_probs == std::vector<double>{0.8, 0.6, 0.1});
  CHECK(m.avg_prob == doctest::Approx(0.5));
  CHECK(fold_label(m, 0) == Gender::kMale);
  CHECK(fold_label(m, 2) == Gender::kFemale);

  const std::vector<P> tie = {{0.3, 0.7}, {0.95, 0.05}};
  CHECK(vote("u", tie).voted_gender == Gender::kFemale);
  const std::vector<P> tie_male = {{0.1, 0.9}, {0.6, 0.4}};
  CHECK(vote("u", tie_male).voted_gender == Gender::kMale);
  const std::vector<P> flat = {{0.5, 0.5}, {0.5, 0.5}};
  CHECK(vote("u", flat).voted_gender == Gender::kFemale);
}

TEST_CASE("vote of identical members reproduces the single member") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = rng.uniform();
    const std::array<double, 2> one{1.0 - p, p};
    const std::vector<std::array<double, 2>> five(5, one);
    const auto single = vote("u", std::span(&one, 1));
    const auto ens = vote("u", five);
    CHECK(ens.voted_gender == single.voted_gender);
    CHECK(ens.avg_prob == doctest::Approx(single.avg_prob).epsilon(1e-15));
  }
}

TEST_CASE("accuracy, summary statistics and coverage") {
  const std::vector<GenderPrediction> preds = {{"a", Gender::kMale, {0.9, 0.4}, 0.65},
                                               {"b", Gender::kFemale, {0.7, 0.95}, 0.825},
                                               {"c", Gender::kFemale, {0.85, 0.9}, 0.875}};
  const std::unordered_map<std::string, Gender> truth = {
      {"a", Gender::kMale}, {"b", Gender::kMale}, {"c", Gender::kFemale}};
  CHECK(accuracy(preds, truth) == doctest::Approx(2.0 / 3.0));
  CHECK(fold_accuracy(preds, truth, 1) == doctest::Approx(1.0 / 3.0));
  auto missing = truth;
  missing.erase("c");
  CHECK_THROWS_AS(accuracy(preds, missing), DataError);

  const AlgoSummary s = summarize({0.8, 0.9, 1.0}, 0.95);
  CHECK(s.mean == doctest::Approx(0.9));
  CHECK(s.sd == doctest::Approx(std::sqrt(0.02 / 3.0)));

  const Coverage c = coverage(preds);
  CHECK(c.covered == 2.0);
  CHECK(c.to_string() == "2 (66.67%)");
  const std::unordered_map<std::string, double> w = {{"a", 5.0}, {"b", 1.0}, {"c", 2.0}};
  CHECK(coverage(preds, 0.8, &w).fraction() == doctest::Approx(3.0 / 8.0));
  CHECK_THROWS_AS(coverage(std::span<const GenderPrediction>{}), DataError);
}

TEST_CASE("report table always lists the published columns") {
  EnsembleReport r;
  r.algos["CNN_char_pos"] = summarize({0.81, 0.82}, 0.8237);
  r.algos["LR"] = summarize({0.7}, std::nullopt);
  const std::string table = r.render_table();
  for (const char* s : {"Algorithm", "Mean", "SD", "Voting", "SVM", "RNN", "CNN_char", "LR",
                        "0.8237", "0.8150", "n/a"}) {
    CHECK(table.find(s) != std::string::npos);
  }
  const auto back = EnsembleReport::from_json(r.to_json());
  CHECK(back.render_table() == table);
  CHECK(algo_name(Variant::kCnnCharPos) == "CNN_char_pos");
}

TEST_CASE("fold seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::size_t f = 0; f < 10; ++f) seen.insert(fold_seed(42, f));
  CHECK(seen.size() == 10);
  CHECK(fold_seed(42, 3) == fold_seed(42, 3));
  CHECK(fold_seed(42, 3) != fold_seed(43, 3));
}

TEST_CASE("cross-validation is deterministic and never trains on held-out users") {
  const PreparedCorpus data = small_corpus(1);
  TrainOptions opts;
  opts.folds = 3;
  opts.epochs = 2;
  opts.seed = 11;
  const CvResult a = train_cv(data, small_arch(), opts);
  const CvResult b = train_cv(data, small_arch(), opts);
  REQUIRE(a.models.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK_FALSE(a.results[f].failed);
    CHECK(a.results[f].val_accuracy == b.results[f].val_accuracy);
    CHECK(a.results[f].best_epoch == best_epoch(a.results[f].val_accuracy));
    CHECK(a.results[f].best_accuracy == a.results[f].val_accuracy[a.results[f].best_epoch - 1]);
    const auto train = training_indices(a.folds, f);
    for (auto i : a.folds[f]) CHECK(std::find(train.begin(), train.end(), i) == train.end());
  }
  const auto pa = predict_ensemble(std::span(const_cast<CvResult&>(a).models), data.docs);
  const auto pb = predict_ensemble(std::span(const_cast<CvResult&>(b).models), data.docs);
  CHECK(pa == pb);
}

TEST_CASE("an ensemble of identical checkpoints reproduces the single model") {
  const PreparedCorpus data = small_corpus(2);
  auto model = init_model<float>(small_arch(), data.vocab, nullptr, 3);
  std::vector<ModelParams<float>> one = {model};
  std::vector<ModelParams<float>> five(5, model);
  const auto single = predict_ensemble(std::span(one), data.docs);
  const auto ens = predict_ensemble(std::span(five), data.docs);
  REQUIRE(single.size() == ens.size());
  for (std::size_t i = 0; i < single.size(); ++i) {
    CHECK(ens[i].voted_gender == single[i].voted_gender);
    CHECK(ens[i].avg_prob == single[i].avg_prob);
    for (double p : ens[i].fold_probs) CHECK(p == single[i].fold_probs[0]);
  }
}

TEST_CASE("checkpoints persist and resume skips finished folds") {
  gftest::TempDir dir("cv");
  const PreparedCorpus data = small_corpus(3);
  TrainOptions opts;
  opts.folds = 2;
  opts.epochs = 1;
  opts.seed = 5;
  opts.out_dir = dir.path();
  const CvResult first = train_cv(data, small_arch(), opts);
  for (const auto& r : first.results) CHECK(std::filesystem::exists(dir.path() / r.checkpoint));
  CHECK(first.results[0].checkpoint == "fold_1.gfus");
  opts.resume = true;
  std::vector<std::string> log;
  opts.log = [&](const std::string& s) { log.push_back(s); };
  const CvResult again = train_cv(data, small_arch(), opts);
  REQUIRE(again.models.size() == 2);
  for (std::size_t f = 0; f < 2; ++f) {
    CHECK(again.results[f].best_accuracy == first.results[f].best_accuracy);
    CHECK(again.models[f].out_w.value == first.models[f].out_w.value);
  }
  const FoldResult round = FoldResult::from_json(first.results[0].to_json());
  CHECK(round.val_accuracy == first.results[0].val_accuracy);
  CHECK(round.best_epoch == first.results[0].best_epoch);
}

TEST_CASE("unlabeled users are refused for training") {
  SynthSpec spec;
  spec.users_per_class = 4;
  spec.tweets_per_user = 3;
  Corpus c = gen_gender_corpus(spec);
  c[0].gender.reset();
  const PreparedCorpus data = prepare_corpus(c, 2);
  CHECK(data.labels[0] == -1);
  TrainOptions opts;
  opts.folds = 2;
  opts.epochs = 1;
  CHECK_THROWS_AS(train_cv(data, small_arch(), opts), DataError);
}

TEST_CASE("parallel folds give the same results as sequential ones") {
  const PreparedCorpus data = small_corpus(4);
  TrainOptions opts;
  opts.folds = 3;
  opts.epochs = 1;
  opts.seed = 2;
  const CvResult seq = train_cv(data, small_arch(), opts);
  opts.jobs = 3;
  const CvResult par = train_cv(data, small_arch(), opts);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(seq.results[f].val_accuracy == par.results[f].val_accuracy);
    CHECK(seq.models[f].out_w.value == par.models[f].out_w.value);
  }
}

}  // TEST_SUITE
