#include "genderfuse/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "genderfuse/error.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

using nlohmann::json;

PreparedCorpus prepare_corpus(const Corpus& corpus, std::size_t min_word_freq,
                              const TextConfig& text, const PosOverride* overrides) {
  if (corpus.empty()) throw DataError("corpus is empty");
  std::vector<AnalyzedDoc> analyzed;
  analyzed.reserve(corpus.size());
  for (const auto& user : corpus) analyzed.push_back(analyze_user(user, text, overrides));
  PreparedCorpus out;
  out.vocab = build_vocab(std::span<const AnalyzedDoc>(analyzed), min_word_freq);
  out.docs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.docs.push_back(encode(analyzed[i], out.vocab, text));
    out.labels.push_back(corpus[i].gender ? label_of(*corpus[i].gender) : -1);
  }
  return out;
}

std::vector<TokenizedDoc> encode_corpus(const Corpus& corpus, const Vocab& vocab,
                                        const TextConfig& text, const PosOverride* overrides) {
  std::vector<TokenizedDoc> docs;
  docs.reserve(corpus.size());
  for (const auto& user : corpus) docs.push_back(build_doc(user, vocab, text, overrides));
  return docs;
}

json FoldResult::to_json() const {
  json j{{"fold", fold},
         {"checkpoint", checkpoint.string()},
         {"val_accuracy", val_accuracy},
         {"train_loss", train_loss},
         {"best_epoch", best_epoch},
         {"best_accuracy", best_accuracy},
         {"failed", failed}};
  j["test_accuracy"] = test_accuracy ? json(*test_accuracy) : json(nullptr);
  if (failed) j["error"] = error;
  return j;
}

FoldResult FoldResult::from_json(const json& j) {
  try {
    FoldResult r;
    r.fold = j.at("fold").get<std::size_t>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.val_accuracy = j.at("val_accuracy").get<std::vector<double>>();
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_accuracy = j.at("best_accuracy").get<double>();
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    if (j.contains("test_accuracy") && !j["test_accuracy"].is_null()) {
      r.test_accuracy = j["test_accuracy"].get<double>();
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fold record: ") + e.what());
  }
}

std::size_t best_epoch(std::span<const double> trace) {
  if (trace.empty()) throw std::invalid_argument("best_epoch of an empty trace");
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] > trace[best]) best = i;
  }
  return best + 1;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  // splitmix64 finalizer over (seed, fold)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(fold) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double label_accuracy(const Tensor<float>& probs, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int pred = probs(i, 1) > probs(i, 0) ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Contiguous minibatches of the shuffled order; a trailing batch of one is
// merged into its predecessor because batch norm needs two rows.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += size) {
    out.emplace_back(start, std::min(n, start + size));
  }
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

}  // namespace

FoldResult train_fold(const PreparedCorpus& data, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const ArchConfig& arch,
                      std::size_t fold, std::size_t epochs, std::uint64_t seed,
                      const PretrainedVectors* pretrained, ModelParams<float>& best,
                      const std::function<void(const std::string&)>& log) {
  if (epochs == 0) throw UsageError("epochs must be positive");
  if (train_idx.size() < 2) throw DataError("a fold needs at least two training documents");
  if (val_idx.empty()) throw DataError("a fold needs at least one validation document");
  for (std::size_t i : train_idx) {
    if (data.labels.at(i) < 0) {
      throw DataError("training user '" + data.docs[i].user_id + "' has no gender label");
    }
  }
  FoldResult result;
  result.fold = fold;
  ModelParams<float> params = init_model<float>(arch, data.vocab, pretrained, seed);
  Optimizer<float> optimizer(arch.optimizer_config());
  Rng rng(seed, 0x747261696e);

  std::vector<const TokenizedDoc*> val_docs;
  std::vector<int> val_labels;
  for (std::size_t i : val_idx) {
    val_docs.push_back(&data.docs[i]);
    val_labels.push_back(data.labels[i]);
  }
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::vector<const TokenizedDoc*> docs;
  std::vector<int> labels;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    const auto ranges = batch_ranges(order.size(), arch.batch_size);
    for (const auto& [lo, hi] : ranges) {
      docs.clear();
      labels.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        docs.push_back(&data.docs[order[k]]);
        labels.push_back(data.labels[order[k]]);
      }
      const Batch batch = make_batch(docs, labels, arch);
      loss_sum += train_step(params, optimizer, batch, rng).loss;
    }
    const double loss = loss_sum / static_cast<double>(ranges.size());
    const Tensor<float> probs =
        predict_probs(params, std::span<const TokenizedDoc* const>(val_docs), arch.batch_size);
    const double acc = label_accuracy(probs, val_labels);
    result.train_loss.push_back(loss);
    result.val_accuracy.push_back(acc);
    if (epoch == 1 || acc > result.best_accuracy) {
      result.best_accuracy = acc;
      result.best_epoch = epoch;
      best = params;
    }
    if (log) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof line, "fold %zu epoch %zu/%zu loss %.4f val_acc %.4f (%.1fs)",
                    fold + 1, epoch, epochs, loss, acc, secs);
      log(line);
    }
  }
  return result;
}

CvResult train_cv(const PreparedCorpus& data, const ArchConfig& arch, const TrainOptions& opts) {
  arch.validate();
  if (opts.folds < 2) throw UsageError("cross-validation needs at least 2 folds");
  if (opts.epochs == 0) throw UsageError("epochs must be positive");
  Corpus shape;  // split_folds only needs the gender labels
  shape.reserve(data.docs.size());
  for (std::size_t i = 0; i < data.docs.size(); ++i) {
    UserRecord u;
    u.user_id = data.docs[i].user_id;
    if (data.labels[i] >= 0) u.gender = gender_of_label(data.labels[i]);
    shape.push_back(std::move(u));
  }
  CvResult out;
  out.folds = split_folds(shape, opts.folds, opts.seed);
  const std::size_t k = out.folds.size();
  out.results.resize(k);
  std::vector<std::optional<ModelParams<float>>> models(k);
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!opts.log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    opts.log(msg);
  };

  auto run_fold = [&](std::size_t f) {
    const std::filesystem::path ckpt =
        opts.out_dir.empty() ? std::filesystem::path()
                             : opts.out_dir / ("fold_" + std::to_string(f + 1) + ".gfus");
    if (opts.resume && !ckpt.empty() && std::filesystem::exists(ckpt)) {
      auto loaded = load_checkpoint<float>(ckpt, &arch, data.vocab.fingerprint());
      if (!(loaded.params.arch == arch)) {
        throw UsageError("cannot resume: " + ckpt.string() +
                         " was trained with a different configuration");
      }
      out.results[f] = FoldResult::from_json(loaded.extra.at("fold_result"));
      models[f] = std::move(loaded.params);
      log("fold " + std::to_string(f + 1) + " resumed from " + ckpt.string());
      return;
    }
    const auto train_idx = training_indices(out.folds, f);
    ModelParams<float> best;
    try {
      FoldResult r = train_fold(data, train_idx, out.folds[f], arch, f, opts.epochs,
                                fold_seed(opts.seed, f), opts.pretrained, best, log);
      r.checkpoint = ckpt.filename();
      if (!ckpt.empty()) save_checkpoint(ckpt, best, data.vocab, json{{"fold_result", r.to_json()}});
      out.results[f] = std::move(r);
      models[f] = std::move(best);
    } catch (const DataError& e) {
      FoldResult r;
      r.fold = f;
      r.failed = true;
      r.error = e.what();
      out.results[f] = std::move(r);
      log("fold " + std::to_string(f + 1) + " failed: " + e.what());
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, k);
  if (jobs == 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t f = next++; f < k; f = next++) run_fold(f);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (auto& m : models) {
    if (m) out.models.push_back(std::move(*m));
  }
  return out;
}

// Ensemble ------------------------------------------------------------------

GenderPrediction vote(const std::string& user_id,
                      std::span<const std::array<double, 2>> fold_probs) {
  if (fold_probs.empty()) throw std::invalid_argument("vote needs at least one fold");
  std::array<std::size_t, 2> votes{0, 0};
  std::array<double, 2> sums{0.0, 0.0};
  for (const auto& p : fold_probs) {
    ++votes[p[1] > p[0] ? 1 : 0];
    sums[0] += p[0];
    sums[1] += p[1];
  }
  int winner;
  if (votes[0] != votes[1]) {
    winner = votes[1] > votes[0] ? 1 : 0;
  } else {
    winner = sums[1] > sums[0] ? 1 : 0;
  }
  GenderPrediction pred;
  pred.user_id = user_id;
  pred.voted_gender = gender_of_label(winner);
  double total = 0.0;
  for (const auto& p : fold_probs) {
    pred.fold_probs.push_back(p[static_cast<std::size_t>(winner)]);
    total += p[static_cast<std::size_t>(winner)];
  }
  pred.avg_prob = total / static_cast<double>(fold_probs.size());
  return pred;
}

Gender fold_label(const GenderPrediction& pred, std::size_t fold) {
  const double p = pred.fold_probs.at(fold);
  if (p > 0.5) return pred.voted_gender;
  if (p < 0.5) {
    return pred.voted_gender == Gender::kMale ? Gender::kFemale : Gender::kMale;
  }
  return Gender::kFemale;
}

std::vector<GenderPrediction> predict_ensemble(std::span<ModelParams<float>> models,
                                               std::span<const TokenizedDoc> docs,
                                               std::size_t batch_size) {
  if (models.empty()) throw UsageError("ensemble has no models");
  for (const auto& m : models) {
    if (m.vocab_fingerprint != models[0].vocab_fingerprint) {
      throw DataError("ensemble members were trained on different vocabularies");
    }
    if (m.arch.variant != models[0].arch.variant) {
      throw DataError("ensemble members have different architectures");
    }
  }
  std::vector<Tensor<float>> per_model;
  for (auto& m : models) per_model.push_back(predict_probs(m, docs, batch_size));
  std::vector<GenderPrediction> out;
  out.reserve(docs.size());
  std::vector<std::array<double, 2>> probs(models.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      const double p1 = per_model[m](i, 1);
      probs[m] = {1.0 - p1, p1};
    }
    out.push_back(vote(docs[i].user_id, probs));
  }
  return out;
}

// Evaluation ----------------------------------------------------------------

std::unordered_map<std::string, Gender> truth_map(const Corpus& corpus) {
  std::unordered_map<std::string, Gender> out;
  for (const auto& u : corpus) {
    if (u.gender) out.emplace(u.user_id, *u.gender);
  }
  return out;
}

namespace {

template <typename LabelFn>
double accuracy_with(std::span<const GenderPrediction> preds,
                     const std::unordered_map<std::string, Gender>& truth, LabelFn label) {
  if (preds.empty()) throw DataError("no predictions to evaluate");
  std::size_t correct = 0;
  for (const auto& p : preds) {
    auto it = truth.find(p.user_id);
    if (it == truth.end()) throw DataError("no truth label for user '" + p.user_id + "'");
    if (label(p) == it->second) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

double accuracy(std::span<const GenderPrediction> preds,
                const std::unordered_map<std::string, Gender>& truth) {
  return accuracy_with(preds, truth, [](const GenderPrediction& p) { return p.voted_gender; });
}

double fold_accuracy(std::span<const GenderPrediction> preds,
                     const std::unordered_map<std::string, Gender>& truth, std::size_t fold) {
  return accuracy_with(preds, truth,
                       [fold](const GenderPrediction& p) { return fold_label(p, fold); });
}

AlgoSummary summarize(std::vector<double> fold_accuracies, std::optional<double> voting) {
  AlgoSummary s;
  s.voting = voting;
  s.fold_accuracies = std::move(fold_accuracies);
  const auto& a = s.fold_accuracies;
  if (a.empty()) return s;
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  if (*lo == *hi) {
    s.mean = *lo;
    s.sd = 0.0;
    return s;
  }
  double total = 0.0;
  for (double v : a) total += v;
  s.mean = std::clamp(total / static_cast<double>(a.size()), *lo, *hi);
  double ss = 0.0;
  for (double v : a) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(a.size()));
  return s;
}

AlgoSummary evaluate(std::span<const GenderPrediction> preds,
                     const std::unordered_map<std::string, Gender>& truth) {
  if (preds.empty()) throw DataError("no predictions to evaluate");
  const std::size_t k = preds[0].fold_probs.size();
  for (const auto& p : preds) {
    if (p.fold_probs.size() != k) {
      throw DataError("user '" + p.user_id + "' has " + std::to_string(p.fold_probs.size()) +
                      " fold probabilities, expected " + std::to_string(k));
    }
  }
  std::vector<double> folds;
  for (std::size_t f = 0; f < k; ++f) folds.push_back(fold_accuracy(preds, truth, f));
  return summarize(std::move(folds), accuracy(preds, truth));
}

std::string algo_name(Variant v) {
  switch (v) {
    case Variant::kCnn: return "CNN";
    case Variant::kCnnChar: return "CNN_char";
    case Variant::kCnnCharPos: return "CNN_char_pos";
  }
  return "?";
}

std::string EnsembleReport::render_table() const {
  std::vector<std::string> columns{"SVM", "RNN", "CNN", "CNN_char", "CNN_char_pos"};
  for (const auto& [name, _] : algos) {
    if (std::find(columns.begin(), columns.end(), name) == columns.end()) columns.push_back(name);
  }
  auto cell = [](std::optional<double> v) { return v ? format_fixed(*v, 4) : std::string("n/a"); };
  std::vector<std::vector<std::string>> rows{{"Algorithm"}, {"Mean"}, {"SD"}, {"Voting"}};
  for (const auto& c : columns) {
    rows[0].push_back(c);
    auto it = algos.find(c);
    const bool has_folds = it != algos.end() && !it->second.fold_accuracies.empty();
    rows[1].push_back(cell(has_folds ? std::optional(it->second.mean) : std::nullopt));
    rows[2].push_back(cell(has_folds ? std::optional(it->second.sd) : std::nullopt));
    rows[3].push_back(cell(it != algos.end() ? it->second.voting : std::nullopt));
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) out << "  ";
      out << r[i];
      if (i + 1 < r.size()) out << std::string(width[i] - r[i].size(), ' ');
    }
    out << '\n';
  }
  return out.str();
}

json EnsembleReport::to_json() const {
  json j = json::object();
  for (const auto& [name, s] : algos) {
    j[name] = {{"mean", s.mean},
               {"sd", s.sd},
               {"voting", s.voting ? json(*s.voting) : json(nullptr)},
               {"folds", s.fold_accuracies}};
  }
  return j;
}

EnsembleReport EnsembleReport::from_json(const json& j) {
  EnsembleReport r;
  try {
    for (const auto& [name, v] : j.items()) {
      std::optional<double> voting;
      if (!v.at("voting").is_null()) voting = v.at("voting").get<double>();
      r.algos[name] = summarize(v.at("folds").get<std::vector<double>>(), voting);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string Coverage::to_string() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.0f (%.2f%%)", covered, 100.0 * fraction());
  return buf;
}

Coverage coverage(std::span<const GenderPrediction> preds, double threshold,
                  const std::unordered_map<std::string, double>* weights) {
  if (preds.empty()) throw DataError("coverage of an empty prediction set");
  Coverage c;
  for (const auto& p : preds) {
    double w = 1.0;
    if (weights != nullptr) {
      auto it = weights->find(p.user_id);
      w = it == weights->end() ? 0.0 : it->second;
    }
    c.total += w;
    if (p.avg_prob > threshold) c.covered += w;
  }
  return c;
}

}  // namespace genderfuse
