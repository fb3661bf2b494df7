#include "genderfuse/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <unordered_set>

#include "genderfuse/error.hpp"
#include "genderfuse/rng.hpp"
#include "genderfuse/train.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

using nlohmann::json;

void TfidfConfig::validate() const {
  if (ngram_min == 0 || ngram_max < ngram_min) {
    throw UsageError("n-gram range must satisfy 1 <= min <= max");
  }
  if (min_df == 0) throw UsageError("min_df must be positive");
}

json TfidfConfig::to_json() const {
  return {{"ngram_min", ngram_min},
          {"ngram_max", ngram_max},
          {"min_df", min_df},
          {"sublinear_tf", sublinear_tf},
          {"l2_normalize", l2_normalize}};
}

TfidfConfig TfidfConfig::from_json(const json& j) {
  TfidfConfig c;
  c.ngram_min = j.at("ngram_min").get<std::size_t>();
  c.ngram_max = j.at("ngram_max").get<std::size_t>();
  c.min_df = j.at("min_df").get<std::size_t>();
  c.sublinear_tf = j.at("sublinear_tf").get<bool>();
  c.l2_normalize = j.at("l2_normalize").get<bool>();
  return c;
}

double SparseVector::norm() const {
  double ss = 0.0;
  for (double v : value) ss += v * v;
  return std::sqrt(ss);
}

double SparseVector::dot(std::span<const double> dense) const {
  double s = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) s += value[i] * dense[index[i]];
  return s;
}

std::vector<std::string> ngrams(std::span<const std::string> tokens, std::size_t n_min,
                                std::size_t n_max) {
  std::vector<std::string> out;
  for (std::size_t n = n_min; n <= n_max; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t j = 1; j < n; ++j) {
        g += ' ';
        g += tokens[i + j];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

TfidfModel TfidfModel::fit(std::span<const std::vector<std::string>> docs,
                           const TfidfConfig& config) {
  config.validate();
  if (docs.empty()) throw DataError("TF-IDF needs at least one document");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    auto grams = ngrams(doc, config.ngram_min, config.ngram_max);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++df[std::move(g)];
  }
  TfidfModel m;
  m.config_ = config;
  for (const auto& [term, count] : df) {
    if (count >= config.min_df) m.terms_.push_back(term);
  }
  if (m.terms_.empty()) {
    throw DataError("TF-IDF vocabulary is empty after pruning; lower min_df (currently " +
                    std::to_string(config.min_df) + ")");
  }
  std::sort(m.terms_.begin(), m.terms_.end());
  const double n = static_cast<double>(docs.size());
  for (std::size_t i = 0; i < m.terms_.size(); ++i) {
    m.index_.emplace(m.terms_[i], static_cast<std::uint32_t>(i));
    m.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(df[m.terms_[i]]))) + 1.0);
  }
  return m;
}

std::int64_t TfidfModel::column(const std::string& term) const {
  auto it = index_.find(term);
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

SparseVector TfidfModel::transform(std::span<const std::string> tokens) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& g : ngrams(tokens, config_.ngram_min, config_.ngram_max)) {
    auto it = index_.find(g);
    if (it != index_.end()) counts[it->second] += 1.0;
  }
  SparseVector v;
  for (const auto& [col, c] : counts) {
    const double tf = config_.sublinear_tf ? 1.0 + std::log(c) : c;
    v.index.push_back(col);
    v.value.push_back(tf * idf_[col]);
  }
  if (config_.l2_normalize) {
    const double nrm = v.norm();
    if (nrm > 0.0) {
      for (double& x : v.value) x /= nrm;
    }
  }
  return v;
}

json TfidfModel::to_json() const {
  return {{"config", config_.to_json()}, {"terms", terms_}, {"idf", idf_}};
}

TfidfModel TfidfModel::from_json(const json& j) {
  TfidfModel m;
  m.config_ = TfidfConfig::from_json(j.at("config"));
  m.terms_ = j.at("terms").get<std::vector<std::string>>();
  m.idf_ = j.at("idf").get<std::vector<double>>();
  if (m.terms_.size() != m.idf_.size()) throw DataError("TF-IDF terms and weights disagree");
  for (std::size_t i = 0; i < m.terms_.size(); ++i) {
    m.index_.emplace(m.terms_[i], static_cast<std::uint32_t>(i));
  }
  return m;
}

// Linear models -------------------------------------------------------------

double loss_derivative(LossKind loss, double margin) {
  if (loss == LossKind::kHinge) return margin < 1.0 ? -1.0 : 0.0;
  // d/dm ln(1 + e^-m) = -1 / (1 + e^m)
  if (margin > 0.0) {
    const double e = std::exp(-margin);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(margin));
}

double LinearModel::decision(const SparseVector& x) const { return x.dot(weights) + bias; }

double LinearModel::prob_male(const SparseVector& x) const {
  const double f = decision(x);
  if (f >= 0.0) return 1.0 / (1.0 + std::exp(-f));
  const double e = std::exp(f);
  return e / (1.0 + e);
}

LinearModel fit_linear(std::span<const SparseVector> features, std::span<const int> labels,
                       const LinearConfig& config) {
  if (features.size() != labels.size()) {
    throw ShapeError("fit_linear got " + std::to_string(features.size()) + " rows and " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!(config.lambda > 0.0)) throw UsageError("linear model lambda must be positive");
  if (!(config.eta0 > 0.0)) throw UsageError("linear model eta0 must be positive");
  bool seen[2] = {false, false};
  std::size_t dim = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    seen[labels[i]] = true;
    if (!features[i].index.empty()) dim = std::max<std::size_t>(dim, features[i].index.back() + 1);
  }
  if (!seen[0] || !seen[1]) throw DataError("linear model needs both classes in training data");

  LinearModel m;
  m.loss = config.loss;
  m.lambda = config.lambda;
  // w = scale * v keeps the shrinkage step O(1).
  std::vector<double> v(dim, 0.0);
  double scale = 1.0;
  const double eta0 = std::min(config.eta0, 1.0 / (4.0 * config.lambda));
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed, 0x6c696e);
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double eta = eta0 / (1.0 + 2.0 * config.lambda * eta0 * static_cast<double>(t));
      ++t;
      const SparseVector& x = features[i];
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double f = scale * x.dot(v) + m.bias;
      const double d = loss_derivative(config.loss, y * f);
      scale *= 1.0 - 2.0 * config.lambda * eta;
      if (d != 0.0) {
        const double step = eta * d * y / scale;
        for (std::size_t k = 0; k < x.index.size(); ++k) v[x.index[k]] -= step * x.value[k];
        m.bias -= eta * d * y;
      }
      if (scale < 1e-9) {
        for (double& w : v) w *= scale;
        scale = 1.0;
      }
    }
  }
  for (double& w : v) w *= scale;
  m.weights = std::move(v);
  return m;
}

std::string algo_name(BaselineAlgo a) { return a == BaselineAlgo::kLr ? "LR" : "SVM"; }

BaselineAlgo parse_baseline_algo(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "lr") return BaselineAlgo::kLr;
  if (n == "svm") return BaselineAlgo::kSvm;
  throw UsageError("unknown baseline '" + std::string(name) + "' (expected lr or svm)");
}

// Protocol ------------------------------------------------------------------

namespace {

BaselineMember fit_member(std::span<const AnalyzedDoc> docs, std::span<const int> labels,
                          std::span<const std::size_t> train_idx, BaselineAlgo algo,
                          const BaselineOptions& options, std::uint64_t seed) {
  std::vector<std::vector<std::string>> train_tokens;
  std::vector<int> train_labels;
  for (std::size_t i : train_idx) {
    train_tokens.push_back(docs[i].tokens);
    train_labels.push_back(labels[i]);
  }
  BaselineMember member;
  member.tfidf = TfidfModel::fit(train_tokens, options.tfidf);
  std::vector<SparseVector> x;
  x.reserve(train_tokens.size());
  for (const auto& t : train_tokens) x.push_back(member.tfidf.transform(t));
  LinearConfig lc = options.linear;
  lc.loss = algo == BaselineAlgo::kLr ? LossKind::kLogistic : LossKind::kHinge;
  lc.seed = seed;
  member.model = fit_linear(x, train_labels, lc);
  return member;
}

}  // namespace

BaselineCv baseline_cv(std::span<const AnalyzedDoc> docs, std::span<const int> labels,
                       BaselineAlgo algo, const BaselineOptions& options) {
  if (docs.size() != labels.size()) throw ShapeError("documents and labels differ in count");
  Corpus shape;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    UserRecord u;
    u.user_id = docs[i].user_id;
    if (labels[i] >= 0) u.gender = gender_of_label(labels[i]);
    shape.push_back(std::move(u));
  }
  BaselineCv out;
  out.folds = split_folds(shape, options.folds, options.seed);
  for (std::size_t f = 0; f < out.folds.size(); ++f) {
    const auto train_idx = training_indices(out.folds, f);
    BaselineMember m = fit_member(docs, labels, train_idx, algo, options,
                                  options.seed + 0x9e3779b97f4a7c15ULL * (f + 1));
    std::size_t correct = 0;
    for (std::size_t i : out.folds[f]) {
      if (m.model.predict(m.tfidf.transform(docs[i].tokens)) == labels[i]) ++correct;
    }
    m.val_accuracy = static_cast<double>(correct) / static_cast<double>(out.folds[f].size());
    out.members.push_back(std::move(m));
  }
  return out;
}

std::vector<GenderPrediction> predict_baseline(std::span<const BaselineMember> members,
                                               std::span<const AnalyzedDoc> docs) {
  if (members.empty()) throw UsageError("baseline ensemble has no members");
  std::vector<GenderPrediction> out;
  std::vector<std::array<double, 2>> probs(members.size());
  for (const auto& d : docs) {
    for (std::size_t m = 0; m < members.size(); ++m) {
      const double p = members[m].model.prob_male(members[m].tfidf.transform(d.tokens));
      probs[m] = {1.0 - p, p};
    }
    out.push_back(vote(d.user_id, probs));
  }
  return out;
}

// Model files ---------------------------------------------------------------

namespace {
constexpr char kBaselineMagic[4] = {'G', 'F', 'B', 'L'};
}

void save_baseline(const std::filesystem::path& path, const BaselineMember& member) {
  json header{{"tfidf", member.tfidf.to_json()},
              {"loss", member.model.loss == LossKind::kLogistic ? "logistic" : "hinge"},
              {"lambda", member.model.lambda},
              {"bias", member.model.bias},
              {"val_accuracy", member.val_accuracy},
              {"columns", member.model.weights.size()}};
  // Sparse payload: (u32 column, f64 weight) for every nonzero weight.
  std::string payload;
  std::uint64_t nnz = 0;
  for (std::size_t i = 0; i < member.model.weights.size(); ++i) {
    const double w = member.model.weights[i];
    if (w == 0.0) continue;
    const auto col = static_cast<std::uint32_t>(i);
    payload.append(reinterpret_cast<const char*>(&col), sizeof col);
    payload.append(reinterpret_cast<const char*>(&w), sizeof w);
    ++nnz;
  }
  header["nonzeros"] = nnz;
  const std::string head = header.dump();
  std::string blob(kBaselineMagic, 4);
  const std::uint32_t version = kBaselineVersion;
  const std::uint64_t head_len = head.size();
  blob.append(reinterpret_cast<const char*>(&version), sizeof version);
  blob.append(reinterpret_cast<const char*>(&head_len), sizeof head_len);
  blob += head;
  blob += payload;
  write_file_atomic(path, blob);
}

BaselineMember load_baseline(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  const std::string where = path.string() + ": ";
  if (blob.size() < 16 || std::memcmp(blob.data(), kBaselineMagic, 4) != 0) {
    throw DataError(where + "not a baseline model file (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t head_len = 0;
  std::memcpy(&version, blob.data() + 4, sizeof version);
  std::memcpy(&head_len, blob.data() + 8, sizeof head_len);
  if (version != kBaselineVersion) {
    throw DataError(where + "baseline format version " + std::to_string(version) +
                    " is not supported");
  }
  if (head_len > blob.size() - 16) throw DataError(where + "truncated header");
  BaselineMember m;
  try {
    const json header = json::parse(blob.substr(16, head_len));
    m.tfidf = TfidfModel::from_json(header.at("tfidf"));
    m.model.loss = header.at("loss").get<std::string>() == "hinge" ? LossKind::kHinge
                                                                    : LossKind::kLogistic;
    m.model.lambda = header.at("lambda").get<double>();
    m.model.bias = header.at("bias").get<double>();
    m.val_accuracy = header.at("val_accuracy").get<double>();
    m.model.weights.assign(header.at("columns").get<std::size_t>(), 0.0);
    const auto nnz = header.at("nonzeros").get<std::uint64_t>();
    const std::size_t rec = sizeof(std::uint32_t) + sizeof(double);
    std::size_t pos = 16 + head_len;
    if (blob.size() - pos != nnz * rec) throw DataError(where + "payload size mismatch");
    for (std::uint64_t k = 0; k < nnz; ++k, pos += rec) {
      std::uint32_t col = 0;
      double w = 0.0;
      std::memcpy(&col, blob.data() + pos, sizeof col);
      std::memcpy(&w, blob.data() + pos + sizeof col, sizeof w);
      if (col >= m.model.weights.size()) throw DataError(where + "weight column out of range");
      m.model.weights[col] = w;
    }
  } catch (const json::exception& e) {
    throw DataError(where + "corrupt header: " + e.what());
  }
  return m;
}

}  // namespace genderfuse
