#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "genderfuse/corpus.hpp"
#include "genderfuse/model.hpp"
#include "genderfuse/textpipe.hpp"

namespace genderfuse {

// Encoded corpus with labels aligned to documents.
struct PreparedCorpus {
  Vocab vocab;
  std::vector<TokenizedDoc> docs;
  std::vector<int> labels;  // -1 when the user carries no gender
};

PreparedCorpus prepare_corpus(const Corpus& corpus, std::size_t min_word_freq,
                              const TextConfig& text = {},
                              const PosOverride* overrides = nullptr);
std::vector<TokenizedDoc> encode_corpus(const Corpus& corpus, const Vocab& vocab,
                                        const TextConfig& text = {},
                                        const PosOverride* overrides = nullptr);

struct TrainOptions {
  std::size_t folds = 5;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;
  const PretrainedVectors* pretrained = nullptr;
  std::function<void(const std::string&)> log;
};

struct FoldResult {
  std::size_t fold = 0;
  std::filesystem::path checkpoint;
  std::vector<double> val_accuracy;  // one entry per epoch
  std::vector<double> train_loss;    // mean minibatch loss per epoch
  std::size_t best_epoch = 0;        // 1-based
  double best_accuracy = 0.0;
  std::optional<double> test_accuracy;
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const;
  static FoldResult from_json(const nlohmann::json& j);
};

// 1-based index of the first maximum; throws on an empty trace.
std::size_t best_epoch(std::span<const double> trace);

// Per-fold seed derived from the master seed, independent of execution order.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

// Trains one model on `train_idx`, selecting the epoch with the best accuracy
// on `val_idx`. The best parameters are written to `best`.
FoldResult train_fold(const PreparedCorpus& data, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const ArchConfig& arch,
                      std::size_t fold, std::size_t epochs, std::uint64_t seed,
                      const PretrainedVectors* pretrained, ModelParams<float>& best,
                      const std::function<void(const std::string&)>& log = {});

struct CvResult {
  std::vector<Fold> folds;
  std::vector<FoldResult> results;
  std::vector<ModelParams<float>> models;  // successful folds, in fold order
};

// k-fold protocol over a prepared corpus: every fold trains independently,
// the best epoch of each is kept, and checkpoints are persisted when
// opts.out_dir is set (and reloaded instead of retrained under opts.resume).
CvResult train_cv(const PreparedCorpus& data, const ArchConfig& arch, const TrainOptions& opts);

// Majority vote over per-fold class probabilities [fold][class]. Ties go to
// the class with the larger summed probability, then to female.
GenderPrediction vote(const std::string& user_id,
                      std::span<const std::array<double, 2>> fold_probs);

// Label a single fold assigned, recovered from a prediction record.
Gender fold_label(const GenderPrediction& pred, std::size_t fold);

std::vector<GenderPrediction> predict_ensemble(std::span<ModelParams<float>> models,
                                               std::span<const TokenizedDoc> docs,
                                               std::size_t batch_size = 64);

// Accuracy of predictions against truth; throws DataError naming the first
// user without a truth label.
double accuracy(std::span<const GenderPrediction> preds,
                const std::unordered_map<std::string, Gender>& truth);
// Accuracy of fold `fold` alone.
double fold_accuracy(std::span<const GenderPrediction> preds,
                     const std::unordered_map<std::string, Gender>& truth, std::size_t fold);

std::unordered_map<std::string, Gender> truth_map(const Corpus& corpus);

struct AlgoSummary {
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
  std::optional<double> voting;
};

AlgoSummary summarize(std::vector<double> fold_accuracies, std::optional<double> voting);
AlgoSummary evaluate(std::span<const GenderPrediction> preds,
                     const std::unordered_map<std::string, Gender>& truth);

// Column name used in comparison reports for each architecture.
std::string algo_name(Variant v);

struct EnsembleReport {
  std::map<std::string, AlgoSummary> algos;

  // Mean/SD/Voting rows; SVM, RNN, CNN, CNN_char and CNN_char_pos always
  // appear (n/a when absent), any other algorithm is appended.
  std::string render_table() const;
  nlohmann::json to_json() const;
  static EnsembleReport from_json(const nlohmann::json& j);
};

struct Coverage {
  double covered = 0.0;  // count (or weight) above the threshold
  double total = 0.0;
  double fraction() const { return total > 0.0 ? covered / total : 0.0; }
  // "818908 (75.11%)"
  std::string to_string() const;
};

// Share of predictions with avg_prob strictly above `threshold`, optionally
// weighting each user (e.g. by tweet count). Throws on empty input.
Coverage coverage(std::span<const GenderPrediction> preds, double threshold = 0.80,
                  const std::unordered_map<std::string, double>* weights = nullptr);

}  // namespace genderfuse
