#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genderfuse/baseline.hpp"
#include "genderfuse/config.hpp"
#include "genderfuse/corpus.hpp"
#include "genderfuse/error.hpp"
#include "genderfuse/stats.hpp"
#include "genderfuse/synth.hpp"
#include "genderfuse/textpipe.hpp"
#include "genderfuse/train.hpp"
#include "genderfuse/verify.hpp"

namespace py = pybind11;
namespace gf = genderfuse;

namespace {

// Conversions between library records and plain Python dicts.

py::dict user_to_py(const gf::UserRecord& u) {
  py::dict d;
  d["user_id"] = u.user_id;
  d["gender"] = u.gender ? py::object(py::str(std::string(gf::gender_name(*u.gender))))
                         : py::object(py::none());
  d["tweets"] = u.tweets;
  return d;
}

gf::UserRecord user_from_py(const py::handle& h) {
  const py::dict d = py::reinterpret_borrow<py::dict>(h);
  gf::UserRecord u;
  u.user_id = d["user_id"].cast<std::string>();
  if (d.contains("gender") && !d["gender"].is_none()) {
    u.gender = gf::parse_gender(d["gender"].cast<std::string>());
  }
  u.tweets = d["tweets"].cast<std::vector<std::string>>();
  return u;
}

py::list corpus_to_py(const gf::Corpus& c) {
  py::list out;
  for (const auto& u : c) out.append(user_to_py(u));
  return out;
}

gf::Corpus corpus_from_py(const py::iterable& users) {
  gf::Corpus c;
  for (const auto& h : users) c.push_back(user_from_py(h));
  gf::validate_corpus(c);
  return c;
}

py::dict prediction_to_py(const gf::GenderPrediction& p) {
  py::dict d;
  d["user_id"] = p.user_id;
  d["voted_gender"] = std::string(gf::gender_name(p.voted_gender));
  d["fold_probs"] = p.fold_probs;
  d["avg_prob"] = p.avg_prob;
  return d;
}

gf::GenderPrediction prediction_from_py(const py::handle& h) {
  const py::dict d = py::reinterpret_borrow<py::dict>(h);
  gf::GenderPrediction p;
  p.user_id = d["user_id"].cast<std::string>();
  p.voted_gender = gf::parse_gender(d["voted_gender"].cast<std::string>());
  p.fold_probs = d["fold_probs"].cast<std::vector<double>>();
  p.avg_prob = d["avg_prob"].cast<double>();
  return p;
}

py::list predictions_to_py(const std::vector<gf::GenderPrediction>& preds) {
  py::list out;
  for (const auto& p : preds) out.append(prediction_to_py(p));
  return out;
}

std::vector<gf::GenderPrediction> predictions_from_py(const py::iterable& preds) {
  std::vector<gf::GenderPrediction> out;
  for (const auto& h : preds) out.push_back(prediction_from_py(h));
  return out;
}

py::dict tweet_to_py(const gf::LabeledTweet& t) {
  py::dict d;
  d["tweet_id"] = t.tweet_id;
  d["user_id"] = t.user_id;
  d["year"] = t.year;
  py::list hbm;
  for (std::size_t i = 0; i < gf::kHbmConstructCount; ++i) {
    if (t.hbm[i]) hbm.append(std::string(gf::hbm_name(static_cast<gf::HbmConstruct>(i))));
  }
  d["hbm"] = hbm;
  d["tpb"] = t.tpb ? py::object(py::str(std::string(gf::attitude_name(*t.tpb))))
                   : py::object(py::none());
  return d;
}

gf::LabeledTweet tweet_from_py(const py::handle& h) {
  const py::dict d = py::reinterpret_borrow<py::dict>(h);
  gf::LabeledTweet t;
  t.tweet_id = d["tweet_id"].cast<std::string>();
  t.user_id = d["user_id"].cast<std::string>();
  t.year = d["year"].cast<int>();
  for (const auto& name : d["hbm"].cast<std::vector<std::string>>()) {
    t.hbm[static_cast<std::size_t>(gf::parse_hbm(name))] = true;
  }
  if (d.contains("tpb") && !d["tpb"].is_none()) {
    t.tpb = gf::parse_attitude(d["tpb"].cast<std::string>());
  }
  return t;
}

gf::RunConfig config_from_py(const py::dict& settings) {
  gf::RunConfig cfg;
  for (const auto& [k, v] : settings) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    cfg.set(k.cast<std::string>(), value);
  }
  return cfg;
}

py::dict summary_to_py(const gf::AlgoSummary& s) {
  py::dict d;
  d["fold_accuracies"] = s.fold_accuracies;
  d["mean"] = s.mean;
  d["sd"] = s.sd;
  d["voting"] = s.voting ? py::object(py::float_(*s.voting)) : py::object(py::none());
  return d;
}

// Trained network ensemble with the vocabulary and text settings it needs.
class Ensemble {
 public:
  static Ensemble train(const py::iterable& users, const py::dict& settings, std::uint64_t seed,
                        const std::string& out_dir, bool desk) {
    const gf::Corpus corpus = corpus_from_py(users);
    const gf::RunConfig cfg = config_from_py(settings);
    Ensemble e;
    e.text_ = cfg.text();
    gf::ArchConfig arch = cfg.arch();
    if (desk) arch = gf::desk_scale(arch);
    py::gil_scoped_release release;
    gf::PreparedCorpus data = gf::prepare_corpus(corpus, cfg.get_size("min_word_freq"), e.text_);
    gf::TrainOptions opts;
    opts.folds = cfg.get_size("folds");
    opts.epochs = cfg.get_size("epochs");
    opts.jobs = cfg.get_size("jobs");
    opts.seed = seed;
    opts.out_dir = out_dir;
    gf::CvResult cv = gf::train_cv(data, arch, opts);
    if (cv.models.empty()) throw gf::DataError("every fold failed");
    e.vocab_ = std::move(data.vocab);
    e.models_ = std::move(cv.models);
    e.results_ = std::move(cv.results);
    return e;
  }

  static Ensemble load(const std::vector<std::filesystem::path>& checkpoints) {
    if (checkpoints.empty()) throw gf::UsageError("no checkpoints given");
    Ensemble e;
    for (const auto& p : checkpoints) {
      auto loaded = gf::load_checkpoint<float>(
          p, e.models_.empty() ? nullptr : &e.models_.front().arch,
          e.models_.empty() ? std::nullopt : std::optional(e.vocab_.fingerprint()));
      if (e.models_.empty()) e.vocab_ = std::move(loaded.vocab);
      e.models_.push_back(std::move(loaded.params));
    }
    return e;
  }

  py::list predict(const py::iterable& users) {
    const gf::Corpus corpus = corpus_from_py(users);
    std::vector<gf::GenderPrediction> preds;
    {
      py::gil_scoped_release release;
      const auto docs = gf::encode_corpus(corpus, vocab_, text_);
      preds = gf::predict_ensemble(std::span(models_), docs, models_.front().arch.batch_size);
    }
    return predictions_to_py(preds);
  }

  py::list fold_results() const {
    py::list out;
    for (const auto& r : results_) out.append(py::module_::import("json").attr("loads")(r.to_json().dump()));
    return out;
  }

  std::size_t size() const { return models_.size(); }
  std::size_t vocab_size() const { return vocab_.word_count(); }
  std::string variant() const { return std::string(gf::variant_name(models_.front().arch.variant)); }

 private:
  gf::Vocab vocab_;
  gf::TextConfig text_;
  std::vector<gf::ModelParams<float>> models_;
  std::vector<gf::FoldResult> results_;
};

class Baseline {
 public:
  static Baseline train(const py::iterable& users, const std::string& algo, const py::dict& settings,
                        std::uint64_t seed) {
    const gf::Corpus corpus = corpus_from_py(users);
    const gf::RunConfig cfg = config_from_py(settings);
    Baseline b;
    b.text_ = cfg.text();
    const gf::BaselineAlgo kind = gf::parse_baseline_algo(algo);
    py::gil_scoped_release release;
    std::vector<gf::AnalyzedDoc> docs;
    std::vector<int> labels;
    for (const auto& u : corpus) {
      if (!u.gender) throw gf::DataError("training user '" + u.user_id + "' has no gender label");
      docs.push_back(gf::analyze_user(u, b.text_));
      labels.push_back(gf::label_of(*u.gender));
    }
    gf::BaselineOptions opts;
    opts.tfidf = cfg.tfidf();
    opts.linear = cfg.linear();
    opts.folds = cfg.get_size("folds");
    opts.seed = seed;
    gf::BaselineCv cv = gf::baseline_cv(docs, labels, kind, opts);
    b.members_ = std::move(cv.members);
    return b;
  }

  py::list predict(const py::iterable& users) const {
    const gf::Corpus corpus = corpus_from_py(users);
    std::vector<gf::AnalyzedDoc> docs;
    for (const auto& u : corpus) docs.push_back(gf::analyze_user(u, text_));
    return predictions_to_py(gf::predict_baseline(members_, docs));
  }

  std::vector<double> val_accuracies() const {
    std::vector<double> out;
    for (const auto& m : members_) out.push_back(m.val_accuracy);
    return out;
  }

 private:
  gf::TextConfig text_;
  std::vector<gf::BaselineMember> members_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of genderfuse";

  py::register_exception<gf::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<gf::DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<gf::ShapeError>(m, "ShapeError", PyExc_ValueError);

  // Text pipeline.
  m.def("normalize", &gf::normalize, py::arg("text"));
  m.def("tokenize", &gf::tokenize, py::arg("normalized"));
  m.def("pos_tag", [](const std::vector<std::string>& tokens) { return gf::pos_tag_names(tokens); },
        py::arg("tokens"));
  m.def("tagset", &gf::tagset);

  // Corpora.
  m.def("read_corpus", [](const std::filesystem::path& p) { return corpus_to_py(gf::read_corpus_jsonl(p)); },
        py::arg("path"));
  m.def("write_corpus",
        [](const std::filesystem::path& p, const py::iterable& users) {
          gf::write_corpus_jsonl(p, corpus_from_py(users));
        },
        py::arg("path"), py::arg("users"));
  m.def("read_predictions",
        [](const std::filesystem::path& p) { return predictions_to_py(gf::read_predictions_jsonl(p)); },
        py::arg("path"));
  m.def("write_predictions",
        [](const std::filesystem::path& p, const py::iterable& preds) {
          gf::write_predictions_jsonl(p, predictions_from_py(preds));
        },
        py::arg("path"), py::arg("predictions"));
  m.def("split_folds",
        [](const py::iterable& users, std::size_t k, std::uint64_t seed) {
          return gf::split_folds(corpus_from_py(users), k, seed);
        },
        py::arg("users"), py::arg("k"), py::arg("seed"));

  // Synthetic data.
  m.def("synth_gender_corpus",
        [](std::size_t users_per_class, std::size_t tweets_per_user, std::size_t vocab_size,
           double marker_rate, double noise_rate, const std::string& signal, std::uint64_t seed,
           std::uint64_t lexicon_seed, const std::string& prefix) {
          gf::SynthSpec s;
          s.users_per_class = users_per_class;
          s.tweets_per_user = tweets_per_user;
          s.vocab_size = vocab_size;
          s.marker_rate = marker_rate;
          s.noise_rate = noise_rate;
          s.mode = gf::parse_signal_mode(signal);
          s.seed = seed;
          s.lexicon_seed = lexicon_seed;
          s.id_prefix = prefix;
          return corpus_to_py(gf::gen_gender_corpus(s));
        },
        py::arg("users_per_class") = 200, py::arg("tweets_per_user") = 20,
        py::arg("vocab_size") = 500, py::arg("marker_rate") = 0.3, py::arg("noise_rate") = 0.2,
        py::arg("signal") = "word", py::arg("seed") = 0, py::arg("lexicon_seed") = 0,
        py::arg("prefix") = "u");
  m.def("synth_labeled_tweets",
        [](std::vector<int> years, std::size_t tweets_per_year, std::size_t users,
           double male_fraction, double p_male, double p_female, std::uint64_t seed) {
          gf::StatsSynthSpec s;
          s.years = std::move(years);
          s.tweets_per_year = tweets_per_year;
          s.users = users;
          s.male_fraction = male_fraction;
          s.p_male.fill(p_male);
          s.p_female.fill(p_female);
          s.seed = seed;
          const gf::LabeledSynth out = gf::gen_labeled_tweets(s);
          py::list tweets;
          for (const auto& t : out.tweets) tweets.append(tweet_to_py(t));
          return py::make_tuple(tweets, predictions_to_py(gf::predictions_from_truth(out.truth)));
        },
        py::arg("years") = std::vector<int>{2014, 2015, 2016, 2017, 2018},
        py::arg("tweets_per_year") = 100000, py::arg("users") = 5000,
        py::arg("male_fraction") = 0.5, py::arg("p_male") = 0.4, py::arg("p_female") = 0.25,
        py::arg("seed") = 0);

  // Models.
  py::class_<Ensemble>(m, "Ensemble")
      .def_static("train", &Ensemble::train, py::arg("users"), py::arg("config") = py::dict(),
                  py::arg("seed") = 0, py::arg("out_dir") = "", py::arg("desk") = false)
      .def_static("load", &Ensemble::load, py::arg("checkpoints"))
      .def("predict", &Ensemble::predict, py::arg("users"))
      .def_property_readonly("fold_results", &Ensemble::fold_results)
      .def_property_readonly("vocab_size", &Ensemble::vocab_size)
      .def_property_readonly("variant", &Ensemble::variant)
      .def("__len__", &Ensemble::size);

  py::class_<Baseline>(m, "Baseline")
      .def_static("train", &Baseline::train, py::arg("users"), py::arg("algo") = "lr",
                  py::arg("config") = py::dict(), py::arg("seed") = 0)
      .def("predict", &Baseline::predict, py::arg("users"))
      .def_property_readonly("val_accuracies", &Baseline::val_accuracies);

  m.def("evaluate",
        [](const py::iterable& preds, const py::iterable& truth_users) {
          return summary_to_py(
              gf::evaluate(predictions_from_py(preds), gf::truth_map(corpus_from_py(truth_users))));
        },
        py::arg("predictions"), py::arg("truth"));
  m.def("coverage",
        [](const py::iterable& preds, double threshold) {
          return gf::coverage(predictions_from_py(preds), threshold).fraction();
        },
        py::arg("predictions"), py::arg("threshold") = 0.8);

  // Statistics.
  m.def("odds_ratio",
        [](std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d, bool haldane) {
          return gf::odds_ratio({a, b, c, d},
                                haldane ? gf::ZeroCellPolicy::kHaldane : gf::ZeroCellPolicy::kNone);
        },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"), py::arg("haldane") = true);
  m.def("chi2_test",
        [](std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d, bool yates) {
          const auto r = gf::chi2_test({a, b, c, d}, yates);
          return py::make_tuple(r.statistic, r.p_value);
        },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"), py::arg("yates") = false);
  m.def("chi2_sf", &gf::chi2_sf_df1, py::arg("x"));
  m.def("analyze",
        [](const py::iterable& tweets, const py::iterable& preds, const py::dict& settings) {
          std::vector<gf::LabeledTweet> ts;
          for (const auto& h : tweets) ts.push_back(tweet_from_py(h));
          const auto tables =
              gf::analyze(ts, predictions_from_py(preds), config_from_py(settings).analysis());
          return py::module_::import("json").attr("loads")(gf::figure_json(tables).dump());
        },
        py::arg("tweets"), py::arg("predictions"), py::arg("config") = py::dict());

  // Verification.
  m.def("grad_check",
        [](std::uint64_t seed, const std::string& arch, std::size_t coords, double tolerance) {
          gf::GradCheckOptions opts;
          opts.max_coords_per_tensor = coords;
          opts.tolerance = tolerance;
          gf::GradCheckReport r;
          {
            py::gil_scoped_release release;
            r = gf::model_grad_check(gf::tiny_arch(gf::parse_variant(arch)), seed, gf::Mode::kEval,
                                     opts);
          }
          py::dict d;
          d["passed"] = r.passed();
          d["max_rel_error"] = r.max_rel_error();
          d["report"] = r.to_string();
          return d;
        },
        py::arg("seed"), py::arg("arch") = "cnn_char_pos", py::arg("coords") = 0,
        py::arg("tolerance") = 1e-4);
  m.def("selftest",
        [](std::uint64_t seed) {
          std::vector<gf::SuiteResult> results;
          {
            py::gil_scoped_release release;
            results = gf::run_selftest(seed);
          }
          py::list out;
          for (const auto& r : results) out.append(py::make_tuple(r.name, r.passed, r.detail));
          return out;
        },
        py::arg("seed"));
  m.def("config_keys", [] {
    py::list out;
    for (const auto& k : gf::config_keys()) {
      py::dict d;
      d["name"] = k.name;
      d["default"] = k.default_value;
      d["help"] = k.help;
      d["published"] = k.published;
      out.append(d);
    }
    return out;
  });
}
