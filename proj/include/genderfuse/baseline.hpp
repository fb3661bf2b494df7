#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "genderfuse/corpus.hpp"
#include "genderfuse/textpipe.hpp"

namespace genderfuse {

struct TfidfConfig {
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 2;
  std::size_t min_df = 2;
  bool sublinear_tf = true;
  bool l2_normalize = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TfidfConfig from_json(const nlohmann::json& j);
};

// Sorted column indices with their values.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  double norm() const;
  double dot(std::span<const double> dense) const;
};

// Word n-grams of `tokens` joined by single spaces, in order of occurrence.
std::vector<std::string> ngrams(std::span<const std::string> tokens, std::size_t n_min,
                                std::size_t n_max);

class TfidfModel {
 public:
  TfidfModel() = default;

  // idf(t) = ln((1 + N) / (1 + df(t))) + 1 over terms with df >= min_df.
  // Columns follow lexicographic term order. Throws DataError when nothing
  // survives pruning.
  static TfidfModel fit(std::span<const std::vector<std::string>> docs,
                        const TfidfConfig& config = {});

  // Unseen n-grams are ignored.
  SparseVector transform(std::span<const std::string> tokens) const;

  std::size_t columns() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<double>& idf() const { return idf_; }
  const TfidfConfig& config() const { return config_; }
  // Column of `term`, or -1.
  std::int64_t column(const std::string& term) const;

  nlohmann::json to_json() const;
  static TfidfModel from_json(const nlohmann::json& j);

 private:
  TfidfConfig config_;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

enum class LossKind { kLogistic, kHinge };

struct LinearConfig {
  LossKind loss = LossKind::kLogistic;
  double lambda = 1e-4;
  std::size_t epochs = 20;
  double eta0 = 0.5;
  std::uint64_t seed = 0;
};

// d loss / d margin at margin m = y * f(x) with y in {-1, +1}.
double loss_derivative(LossKind loss, double margin);

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  LossKind loss = LossKind::kLogistic;
  double lambda = 0.0;

  double decision(const SparseVector& x) const;
  // Probability of the male class: the logistic of the decision value (for
  // both loss kinds).
  double prob_male(const SparseVector& x) const;
  int predict(const SparseVector& x) const { return decision(x) > 0.0 ? 1 : 0; }
};

// SGD on mean loss + lambda * ||w||^2 with step size
// eta_t = eta0' / (1 + 2 lambda eta0' t), eta0' = min(eta0, 1 / (4 lambda)).
// Labels are 0/1 (female/male). Throws DataError when only one class appears.
LinearModel fit_linear(std::span<const SparseVector> features, std::span<const int> labels,
                       const LinearConfig& config);

enum class BaselineAlgo { kLr, kSvm };
std::string algo_name(BaselineAlgo a);
BaselineAlgo parse_baseline_algo(std::string_view name);

struct BaselineMember {
  TfidfModel tfidf;
  LinearModel model;
  double val_accuracy = 0.0;
};

struct BaselineOptions {
  TfidfConfig tfidf;
  LinearConfig linear;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
};

struct BaselineCv {
  std::vector<Fold> folds;
  std::vector<BaselineMember> members;
};

// Same protocol as the network: stratified folds, one model per held-out fold,
// with the TF-IDF statistics fitted on that fold's training part only.
BaselineCv baseline_cv(std::span<const AnalyzedDoc> docs, std::span<const int> labels,
                       BaselineAlgo algo, const BaselineOptions& options);

std::vector<GenderPrediction> predict_baseline(std::span<const BaselineMember> members,
                                               std::span<const AnalyzedDoc> docs);

inline constexpr std::uint32_t kBaselineVersion = 1;
void save_baseline(const std::filesystem::path& path, const BaselineMember& member);
BaselineMember load_baseline(const std::filesystem::path& path);

}  // namespace genderfuse
