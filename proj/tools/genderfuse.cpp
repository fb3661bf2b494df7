// Command-line entry point for the gender prediction and analysis pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "genderfuse/baseline.hpp"
#include "genderfuse/config.hpp"
#include "genderfuse/corpus.hpp"
#include "genderfuse/error.hpp"
#include "genderfuse/model.hpp"
#include "genderfuse/stats.hpp"
#include "genderfuse/synth.hpp"
#include "genderfuse/textpipe.hpp"
#include "genderfuse/train.hpp"
#include "genderfuse/util.hpp"
#include "genderfuse/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace genderfuse {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

// A check that ran to completion and found a violation.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
};

RunConfig load_config(const Globals& g) {
  RunConfig cfg;
  if (const char* env = std::getenv("GENDERFUSE_CONFIG"); env != nullptr && *env != '\0') {
    cfg.merge_file(env);
  }
  if (!g.config_file.empty()) cfg.merge_file(g.config_file);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    cfg.set(trim(std::string_view(s).substr(0, eq)), trim(std::string_view(s).substr(eq + 1)));
  }
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::string fold_file(std::size_t fold, const char* ext) {
  return "fold_" + std::to_string(fold + 1) + ext;
}

// Files named fold_<k><ext> in `dir`, ordered by k.
std::vector<fs::path> fold_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DataError("model directory " + dir.string() + " not found");
  const std::regex pattern("fold_([0-9]+)" + std::regex_replace(ext, std::regex("\\."), "\\."));
  std::vector<std::pair<std::size_t, fs::path>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoul(m[1]), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

bool all_labeled(const Corpus& corpus) {
  return std::all_of(corpus.begin(), corpus.end(), [](const auto& u) { return u.gender; });
}

void print_report(const EnsembleReport& report) { std::cout << report.render_table(); }

// import-pan -----------------------------------------------------------------

struct ImportPanArgs {
  std::string authors;
  std::string truth;
  std::string out;
};

int run_import_pan(const ImportPanArgs& a) {
  const PanImport imp = import_pan(a.authors, a.truth);
  for (const auto& w : imp.warnings) std::cerr << "warning: " << w << "\n";
  write_corpus_jsonl(fs::path(a.out), imp.corpus);
  std::cout << "imported " << imp.corpus.size() << " authors (" << imp.warnings.size()
            << " warnings) -> " << a.out << "\n";
  return kExitOk;
}

// preprocess -----------------------------------------------------------------

struct PreprocessArgs {
  std::string corpus;
  std::string out;
  std::string pos_override;
  bool list_tagset = false;
};

int run_preprocess(const PreprocessArgs& a, const RunConfig& cfg) {
  if (a.list_tagset) {
    const auto& tags = tagset();
    for (std::size_t i = 0; i < tags.size(); ++i) std::cout << i << "\t" << tags[i] << "\n";
    return kExitOk;
  }
  if (a.corpus.empty() || a.out.empty()) {
    throw UsageError("preprocess needs --corpus and --out (or --list-tagset)");
  }
  const Corpus corpus = read_corpus_jsonl(fs::path(a.corpus));
  std::optional<PosOverride> overrides;
  if (!a.pos_override.empty()) overrides = read_pos_override(a.pos_override);
  const TextConfig text = cfg.text();
  std::ostringstream out;
  std::size_t tokens = 0;
  for (const auto& u : corpus) {
    const AnalyzedDoc doc = analyze_user(u, text, overrides ? &*overrides : nullptr);
    json tags = json::array();
    for (auto t : doc.tags) tags.push_back(tagset().at(static_cast<std::size_t>(t)));
    out << json{{"user_id", doc.user_id}, {"tokens", doc.tokens}, {"tags", tags}}.dump() << "\n";
    tokens += doc.tokens.size();
  }
  write_file_atomic(a.out, out.str());
  std::cout << "preprocessed " << corpus.size() << " users, " << tokens << " tokens -> " << a.out
            << "\n";
  return kExitOk;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string test;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string arch;
  std::optional<std::size_t> folds;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> jobs;
  bool resume = false;
  bool desk = false;
};

int run_train(const TrainArgs& a, RunConfig cfg) {
  if (!a.arch.empty()) cfg.set("arch", a.arch);
  if (a.folds) cfg.set("folds", std::to_string(*a.folds));
  if (a.epochs) cfg.set("epochs", std::to_string(*a.epochs));
  if (a.jobs) cfg.set("jobs", std::to_string(*a.jobs));
  ArchConfig arch = cfg.arch();
  if (a.desk) arch = desk_scale(arch);
  arch.validate();

  const Corpus corpus = read_corpus_jsonl(fs::path(a.corpus));
  if (!all_labeled(corpus)) throw DataError("training corpus " + a.corpus + " has unlabeled users");
  const TextConfig text = cfg.text();
  const PreparedCorpus data = prepare_corpus(corpus, cfg.get_size("min_word_freq"), text);

  std::optional<PretrainedVectors> pretrained;
  if (!cfg.get("pretrained").empty()) {
    pretrained = read_pretrained(cfg.get("pretrained"), arch.word_dim, &data.vocab);
    log_line("pretrained vectors for " + std::to_string(pretrained->size()) + " of " +
             std::to_string(data.vocab.word_count()) + " words");
  }

  TrainOptions opts;
  opts.folds = cfg.get_size("folds");
  opts.epochs = cfg.get_size("epochs");
  opts.jobs = cfg.get_size("jobs");
  opts.seed = *a.seed;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  opts.pretrained = pretrained ? &*pretrained : nullptr;
  opts.log = log_line;
  fs::create_directories(a.out);
  write_file_atomic(fs::path(a.out) / "config.txt", cfg.dump());

  CvResult cv = train_cv(data, arch, opts);
  json folds = json::array();
  for (const auto& r : cv.results) folds.push_back(r.to_json());
  std::size_t failed = 0;
  for (const auto& r : cv.results) failed += r.failed ? 1 : 0;
  if (cv.models.empty()) throw DataError("every fold failed; see the fold log above");

  EnsembleReport report;
  const std::string algo = algo_name(arch.variant);
  if (!a.test.empty()) {
    const Corpus test = read_corpus_jsonl(fs::path(a.test));
    const auto docs = encode_corpus(test, data.vocab, text);
    const auto preds = predict_ensemble(std::span(cv.models), docs, arch.batch_size);
    write_predictions_jsonl(fs::path(a.out) / "test_predictions.jsonl", preds);
    if (all_labeled(test)) {
      const auto truth = truth_map(test);
      report.algos[algo] = evaluate(preds, truth);
      std::size_t m = 0;
      for (auto& f : folds) {
        if (!f.at("failed").get<bool>()) f["test_accuracy"] = fold_accuracy(preds, truth, m++);
      }
    }
  }
  if (report.algos.empty()) {
    std::vector<double> best;
    for (const auto& r : cv.results) {
      if (!r.failed) best.push_back(r.best_accuracy);
    }
    report.algos[algo] = summarize(best, std::nullopt);
  }
  write_json(fs::path(a.out) / "folds.json", folds);
  write_json(fs::path(a.out) / "report.json", report.to_json());
  print_report(report);
  if (failed > 0) {
    std::cerr << failed << " of " << cv.results.size() << " folds failed\n";
    return kExitData;
  }
  return kExitOk;
}

// predict --------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::vector<std::string> checkpoints;
  std::string corpus;
  std::string out;
};

std::vector<GenderPrediction> predict_from(const PredictArgs& a, const RunConfig& cfg,
                                           const Corpus& corpus) {
  const TextConfig text = cfg.text();
  std::vector<fs::path> nets;
  std::vector<fs::path> linear;
  for (const auto& c : a.checkpoints) nets.emplace_back(c);
  if (!a.model.empty()) {
    nets = fold_files(a.model, ".gfus");
    linear = fold_files(a.model, ".gfbl");
    if (nets.empty() && linear.empty()) {
      throw DataError("no fold_<k>.gfus or fold_<k>.gfbl files in " + a.model);
    }
    if (!nets.empty() && !linear.empty()) {
      throw DataError(a.model + " mixes network and baseline models");
    }
  }
  if (!linear.empty()) {
    std::vector<BaselineMember> members;
    for (const auto& p : linear) members.push_back(load_baseline(p));
    std::vector<AnalyzedDoc> docs;
    for (const auto& u : corpus) docs.push_back(analyze_user(u, text));
    return predict_baseline(members, docs);
  }
  if (nets.empty()) throw UsageError("predict needs --model DIR or --checkpoint FILE");
  std::vector<ModelParams<float>> models;
  std::optional<Vocab> vocab;
  for (const auto& p : nets) {
    auto loaded = load_checkpoint<float>(
        p, models.empty() ? nullptr : &models.front().arch,
        vocab ? std::optional<std::uint64_t>(vocab->fingerprint()) : std::nullopt);
    if (!vocab) vocab = std::move(loaded.vocab);
    models.push_back(std::move(loaded.params));
  }
  const auto docs = encode_corpus(corpus, *vocab, text);
  return predict_ensemble(std::span(models), docs, models.front().arch.batch_size);
}

int run_predict(const PredictArgs& a, const RunConfig& cfg) {
  const Corpus corpus = read_corpus_jsonl(fs::path(a.corpus));
  const auto preds = predict_from(a, cfg, corpus);
  write_predictions_jsonl(fs::path(a.out), preds);
  const double threshold = cfg.get_double("coverage_threshold");
  std::cout << "predicted " << preds.size() << " users -> " << a.out << "\n"
            << "coverage above " << format_fixed(threshold, 2) << ": "
            << coverage(preds, threshold).to_string() << "\n";
  return kExitOk;
}

// evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> preds;
  std::string truth;
  std::string out;
};

int run_evaluate(const EvaluateArgs& a, const RunConfig& cfg) {
  const auto truth = truth_map(read_corpus_jsonl(fs::path(a.truth)));
  EnsembleReport report;
  const double threshold = cfg.get_double("coverage_threshold");
  std::vector<std::string> coverage_lines;
  for (const auto& spec : a.preds) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("--pred expects ALGO=path, got '" + spec + "'");
    }
    const std::string algo = spec.substr(0, eq);
    const auto preds = read_predictions_jsonl(fs::path(spec.substr(eq + 1)));
    if (report.algos.count(algo) != 0) throw UsageError("algorithm " + algo + " given twice");
    report.algos[algo] = evaluate(preds, truth);
    coverage_lines.push_back(algo + " coverage above " + format_fixed(threshold, 2) + ": " +
                             coverage(preds, threshold).to_string());
  }
  print_report(report);
  for (const auto& l : coverage_lines) std::cout << l << "\n";
  if (!a.out.empty()) write_json(a.out, report.to_json());
  return kExitOk;
}

// baseline -------------------------------------------------------------------

struct BaselineArgs {
  std::string corpus;
  std::string test;
  std::string out;
  std::string algo = "lr";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
};

int run_baseline(const BaselineArgs& a, RunConfig cfg) {
  if (a.folds) cfg.set("folds", std::to_string(*a.folds));
  const BaselineAlgo algo = parse_baseline_algo(a.algo);
  const Corpus corpus = read_corpus_jsonl(fs::path(a.corpus));
  if (!all_labeled(corpus)) throw DataError("training corpus " + a.corpus + " has unlabeled users");
  const TextConfig text = cfg.text();
  std::vector<AnalyzedDoc> docs;
  std::vector<int> labels;
  for (const auto& u : corpus) {
    docs.push_back(analyze_user(u, text));
    labels.push_back(label_of(*u.gender));
  }
  BaselineOptions opts;
  opts.tfidf = cfg.tfidf();
  opts.linear = cfg.linear();
  opts.linear.loss = algo == BaselineAlgo::kLr ? LossKind::kLogistic : LossKind::kHinge;
  opts.folds = cfg.get_size("folds");
  opts.seed = *a.seed;
  const BaselineCv cv = baseline_cv(docs, labels, algo, opts);
  fs::create_directories(a.out);
  for (std::size_t f = 0; f < cv.members.size(); ++f) {
    save_baseline(fs::path(a.out) / fold_file(f, ".gfbl"), cv.members[f]);
  }

  EnsembleReport report;
  const std::string name = algo_name(algo);
  if (!a.test.empty()) {
    const Corpus test = read_corpus_jsonl(fs::path(a.test));
    std::vector<AnalyzedDoc> tdocs;
    for (const auto& u : test) tdocs.push_back(analyze_user(u, text));
    const auto preds = predict_baseline(cv.members, tdocs);
    write_predictions_jsonl(fs::path(a.out) / "test_predictions.jsonl", preds);
    if (all_labeled(test)) report.algos[name] = evaluate(preds, truth_map(test));
  }
  if (report.algos.empty()) {
    std::vector<double> val;
    for (const auto& m : cv.members) val.push_back(m.val_accuracy);
    report.algos[name] = summarize(val, std::nullopt);
  }
  write_json(fs::path(a.out) / "report.json", report.to_json());
  print_report(report);
  return kExitOk;
}

// analyze --------------------------------------------------------------------

struct AnalyzeArgs {
  std::string tweets;
  std::string preds;
  std::string out;
  std::string json_out;
};

int run_analyze(const AnalyzeArgs& a, const RunConfig& cfg) {
  const auto tweets = read_labeled_jsonl(fs::path(a.tweets));
  const auto preds = read_predictions_jsonl(fs::path(a.preds));
  const AnalysisConfig config = cfg.analysis();
  const auto tables = analyze(tweets, preds, config);
  write_file_atomic(a.out, figure_csv(tables));
  if (!a.json_out.empty()) write_json(a.json_out, figure_json(tables));
  std::size_t significant = 0;
  for (const auto& t : tables) significant += t.significant ? 1 : 0;
  std::cout << tables.size() << " tables, " << significant << " significant at p < "
            << config.threshold() << " -> " << a.out << "\n";
  return kExitOk;
}

// synth ----------------------------------------------------------------------

struct SynthGenderArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  SynthSpec spec;
  std::string signal = "word";
};

int run_synth_gender(SynthGenderArgs a) {
  a.spec.seed = *a.seed;
  a.spec.mode = parse_signal_mode(a.signal);
  const Corpus corpus = gen_gender_corpus(a.spec);
  write_corpus_jsonl(fs::path(a.out), corpus);
  std::cout << "generated " << corpus.size() << " users -> " << a.out << "\n";
  return kExitOk;
}

struct SynthStatsArgs {
  std::string out;
  std::string pred_out;
  std::optional<std::uint64_t> seed;
  StatsSynthSpec spec;
  std::optional<double> p_male;
  std::optional<double> p_female;
};

int run_synth_stats(SynthStatsArgs a) {
  a.spec.seed = *a.seed;
  if (a.p_male) a.spec.p_male.fill(*a.p_male);
  if (a.p_female) a.spec.p_female.fill(*a.p_female);
  const LabeledSynth synth = gen_labeled_tweets(a.spec);
  write_labeled_jsonl(fs::path(a.out), synth.tweets);
  if (!a.pred_out.empty()) {
    write_predictions_jsonl(fs::path(a.pred_out), predictions_from_truth(synth.truth));
  }
  std::cout << "generated " << synth.tweets.size() << " tweets -> " << a.out << "\n";
  for (std::size_t c = 0; c < kStatConstructCount; ++c) {
    std::cout << "implied odds ratio " << stat_construct_name(static_cast<StatConstruct>(c))
              << " " << format_fixed(synth.implied_or[c], 4) << "\n";
  }
  return kExitOk;
}

// gradcheck / selftest -------------------------------------------------------

struct GradcheckArgs {
  std::optional<std::uint64_t> seed;
  std::string arch = "cnn_char_pos";
  std::string bn = "eval";
  std::size_t coords = 0;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  ArchConfig arch = tiny_arch(parse_variant(a.arch));
  Mode mode;
  if (a.bn == "eval") {
    mode = Mode::kEval;
  } else if (a.bn == "train") {
    mode = Mode::kTrain;
  } else {
    throw UsageError("--bn must be eval or train, got '" + a.bn + "'");
  }
  GradCheckOptions opts;
  opts.max_coords_per_tensor = a.coords;
  opts.tolerance = a.tolerance;
  opts.seed = *a.seed;
  const GradCheckReport report = model_grad_check(arch, *a.seed, mode, opts);
  std::cout << report.to_string();
  if (!report.passed()) throw VerificationFailure("gradient check failed");
  std::cout << "gradient check passed\n";
  return kExitOk;
}

int run_selftest_command(std::uint64_t seed) {
  std::size_t failed = 0;
  for (const auto& r : run_selftest(seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << "  " << r.detail;
    std::cout << "\n";
    failed += r.passed ? 0 : 1;
  }
  if (failed > 0) throw VerificationFailure(std::to_string(failed) + " suites failed");
  std::cout << "all suites passed\n";
  return kExitOk;
}

int main_impl(int argc, char** argv) {
  CLI::App app{"Twitter gender prediction with fused word, character and POS embeddings, "
               "plus odds-ratio analysis of construct-labeled tweets."};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.\n\n" +
             config_help());
  Globals g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override one config key (key=value)")->take_all();

  std::function<int()> action;

  ImportPanArgs imp;
  auto* c_imp = app.add_subcommand("import-pan", "convert a PAN author-profiling corpus to JSONL");
  c_imp->add_option("--authors", imp.authors, "directory of <id>.xml files")->required();
  c_imp->add_option("--truth", imp.truth, "truth file of id:::gender rows")->required();
  c_imp->add_option("--out", imp.out, "output corpus JSONL")->required();
  c_imp->callback([&] { action = [&] { return run_import_pan(imp); }; });

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "normalize, tokenize and tag a corpus");
  c_pre->add_option("--corpus", pre.corpus, "input corpus JSONL");
  c_pre->add_option("--out", pre.out, "output JSONL of tokens and tags per user");
  c_pre->add_option("--pos-override", pre.pos_override, "JSONL of precomputed tags per user");
  c_pre->add_flag("--list-tagset", pre.list_tagset, "print the tagset and exit");
  c_pre->callback([&] { action = [&] { return run_preprocess(pre, load_config(g)); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "k-fold training with best-epoch selection");
  c_tr->add_option("--corpus", tr.corpus, "labeled training corpus JSONL")->required();
  c_tr->add_option("--test", tr.test, "test corpus JSONL for ensemble evaluation");
  c_tr->add_option("--out", tr.out, "output directory for checkpoints and reports")->required();
  c_tr->add_option("--seed", tr.seed, "master seed")->required();
  c_tr->add_option("--arch", tr.arch, "cnn, cnn_char or cnn_char_pos");
  c_tr->add_option("--folds", tr.folds, "number of folds");
  c_tr->add_option("--epochs", tr.epochs, "epochs per fold");
  c_tr->add_option("--jobs", tr.jobs, "folds trained concurrently");
  c_tr->add_flag("--resume", tr.resume, "reuse fold checkpoints already in --out");
  c_tr->add_flag("--desk", tr.desk, "desk-scale filter counts (64 per width, dense 64)");
  c_tr->callback([&] { action = [&] { return run_train(tr, load_config(g)); }; });

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "ensemble predictions for a corpus");
  c_pr->add_option("--model", pr.model, "directory with fold_<k>.gfus or fold_<k>.gfbl files");
  c_pr->add_option("--checkpoint", pr.checkpoints, "individual checkpoint files");
  c_pr->add_option("--corpus", pr.corpus, "corpus JSONL")->required();
  c_pr->add_option("--out", pr.out, "output predictions JSONL")->required();
  c_pr->callback([&] { action = [&] { return run_predict(pr, load_config(g)); }; });

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Mean/SD/Voting report from prediction files");
  c_ev->add_option("--pred", ev.preds, "ALGO=predictions.jsonl (repeatable)")->required();
  c_ev->add_option("--truth", ev.truth, "labeled corpus JSONL")->required();
  c_ev->add_option("--out", ev.out, "report JSON");
  c_ev->callback([&] { action = [&] { return run_evaluate(ev, load_config(g)); }; });

  BaselineArgs bl;
  auto* c_bl = app.add_subcommand("baseline", "TF-IDF linear baseline under the same protocol");
  c_bl->add_option("--corpus", bl.corpus, "labeled training corpus JSONL")->required();
  c_bl->add_option("--test", bl.test, "test corpus JSONL");
  c_bl->add_option("--out", bl.out, "output directory")->required();
  c_bl->add_option("--algo", bl.algo, "lr or svm")->capture_default_str();
  c_bl->add_option("--seed", bl.seed, "master seed")->required();
  c_bl->add_option("--folds", bl.folds, "number of folds");
  c_bl->callback([&] { action = [&] { return run_baseline(bl, load_config(g)); }; });

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "odds ratios and chi-square tests per construct-year");
  c_an->add_option("--tweets", an.tweets, "labeled tweets JSONL")->required();
  c_an->add_option("--pred", an.preds, "gender predictions JSONL")->required();
  c_an->add_option("--out", an.out, "output CSV")->required();
  c_an->add_option("--json", an.json_out, "JSON mirror of the CSV");
  c_an->callback([&] { action = [&] { return run_analyze(an, load_config(g)); }; });

  auto* c_sy = app.add_subcommand("synth", "synthetic corpora");
  c_sy->require_subcommand(1);
  SynthGenderArgs sg;
  auto* c_sg = c_sy->add_subcommand("gender", "labeled users with a planted class signal");
  c_sg->add_option("--out", sg.out, "output corpus JSONL")->required();
  c_sg->add_option("--seed", sg.seed, "sampling seed")->required();
  c_sg->add_option("--lexicon-seed", sg.spec.lexicon_seed, "seed of the shared lexicon")->capture_default_str();
  c_sg->add_option("--users-per-class", sg.spec.users_per_class, "users per gender")->capture_default_str();
  c_sg->add_option("--tweets-per-user", sg.spec.tweets_per_user, "tweets per user")->capture_default_str();
  c_sg->add_option("--vocab-size", sg.spec.vocab_size, "filler lexicon size")->capture_default_str();
  c_sg->add_option("--marker-rate", sg.spec.marker_rate, "per-tweet signal rate")->capture_default_str();
  c_sg->add_option("--noise-rate", sg.spec.noise_rate, "per-tweet Twitter noise rate")->capture_default_str();
  c_sg->add_option("--signal", sg.signal, "word, char_suffix or pos")->capture_default_str();
  c_sg->add_option("--prefix", sg.spec.id_prefix, "user id prefix")->capture_default_str();
  c_sg->callback([&] { action = [&] { return run_synth_gender(sg); }; });
  SynthStatsArgs ss;
  auto* c_ss = c_sy->add_subcommand("stats", "construct-labeled tweets with known odds ratios");
  c_ss->add_option("--out", ss.out, "output labeled tweets JSONL")->required();
  c_ss->add_option("--pred-out", ss.pred_out, "ground-truth predictions JSONL");
  c_ss->add_option("--seed", ss.seed, "sampling seed")->required();
  c_ss->add_option("--years", ss.spec.years, "years to generate")->capture_default_str();
  c_ss->add_option("--tweets-per-year", ss.spec.tweets_per_year, "tweets per year")->capture_default_str();
  c_ss->add_option("--users", ss.spec.users, "distinct users")->capture_default_str();
  c_ss->add_option("--male-fraction", ss.spec.male_fraction, "share of male users")->capture_default_str();
  c_ss->add_option("--p-male", ss.p_male, "construct rate for male tweets (all constructs)");
  c_ss->add_option("--p-female", ss.p_female, "construct rate for female tweets (all constructs)");
  c_ss->callback([&] { action = [&] { return run_synth_stats(ss); }; });

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of the tiny model");
  c_gc->add_option("--seed", gc.seed, "seed for data and parameters")->required();
  c_gc->add_option("--arch", gc.arch, "cnn, cnn_char or cnn_char_pos")->capture_default_str();
  c_gc->add_option("--bn", gc.bn, "batch norm mode: eval or train")->capture_default_str();
  c_gc->add_option("--coords", gc.coords, "coordinates per tensor (0 = all)")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance, "relative error tolerance")->capture_default_str();
  c_gc->callback([&] { action = [&] { return run_gradcheck(gc); }; });

  std::optional<std::uint64_t> st_seed;
  auto* c_st = app.add_subcommand("selftest", "run the invariant suites");
  c_st->add_option("--seed", st_seed, "seed for the randomized suites")->required();
  c_st->callback([&] { action = [&] { return run_selftest_command(*st_seed); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  // Malformed settings are rejected even by subcommands that ignore them.
  load_config(g);
  return action();
}

}  // namespace
}  // namespace genderfuse

int main(int argc, char** argv) {
  using namespace genderfuse;
  try {
    return main_impl(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerify;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
