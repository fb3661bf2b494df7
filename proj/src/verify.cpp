#include "genderfuse/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "genderfuse/corpus.hpp"
#include "genderfuse/error.hpp"
#include "genderfuse/rng.hpp"
#include "genderfuse/stats.hpp"
#include "genderfuse/synth.hpp"
#include "genderfuse/train.hpp"

namespace genderfuse {

ArchConfig tiny_arch(Variant variant) {
  ArchConfig a;
  a.variant = variant;
  a.word_dim = 8;
  a.char_dim = 4;
  a.pos_dim = 3;
  a.char_filters = 4;
  a.char_filter_width = 3;
  a.word_filter_widths = {1, 2, 3};
  a.word_filters_per_width = 4;
  a.dense_units = 8;
  a.dropout = 0.0;
  a.batch_size = 4;
  a.init_scale = 0.5;
  return a;
}

TinyProblem tiny_problem(std::uint64_t seed, std::size_t docs, std::size_t max_len) {
  if (docs < 2 || max_len < 1) throw UsageError("tiny problem needs two docs and one token");
  Rng rng(seed, 0x74696e79);
  static const char* kPool[] = {"we",   "can",  "see",   "the", "sun",  "is",    "big",
                                "kora", "lumi", "tavex", "ok",  "ran",  "quick", "blue",
                                "xy",   "a",    "zenith", "mo", "pilot", "hazy"};
  constexpr std::size_t kPoolSize = sizeof(kPool) / sizeof(kPool[0]);
  TinyProblem p;
  for (std::size_t i = 0; i < docs; ++i) {
    const std::size_t len = 1 + static_cast<std::size_t>(rng.below(max_len));
    std::string tweet;
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) tweet += ' ';
      tweet += kPool[rng.below(kPoolSize)];
    }
    UserRecord u;
    u.user_id = "tiny" + std::to_string(i);
    u.gender = i % 2 == 0 ? Gender::kFemale : Gender::kMale;
    u.tweets = {tweet};
    p.corpus.push_back(std::move(u));
    p.labels.push_back(static_cast<int>(i % 2));
  }
  p.vocab = build_vocab(p.corpus, 2);
  for (const auto& u : p.corpus) p.docs.push_back(build_doc(u, p.vocab));
  return p;
}

template <typename T>
double model_loss(ModelParams<T>& params, const Batch& batch, Mode mode) {
  const BatchNormStats<T> saved = params.bn_stats;
  Tape<T> tape;
  Rng rng(0);
  auto fr = forward(tape, params, batch, mode, rng);
  auto xent = softmax_xent(tape, fr.logits, std::span(batch.labels));
  std::vector<Var> decayed;
  for (Param<T>* p : params.params()) {
    if (p->decay) decayed.push_back(tape.param(*p));
  }
  Var pen = l2_penalty(tape, std::span<const Var>(decayed), params.arch.l2);
  params.bn_stats = saved;
  return static_cast<double>(tape.value(xent.loss)[0]) + static_cast<double>(tape.value(pen)[0]);
}

template double model_loss<float>(ModelParams<float>&, const Batch&, Mode);
template double model_loss<double>(ModelParams<double>&, const Batch&, Mode);

namespace {

Batch tiny_batch(const TinyProblem& p, const ArchConfig& arch) {
  std::vector<const TokenizedDoc*> ptrs;
  for (const auto& d : p.docs) ptrs.push_back(&d);
  return make_batch(std::span<const TokenizedDoc* const>(ptrs), std::span(p.labels), arch);
}

}  // namespace

GradCheckReport model_grad_check(ArchConfig arch, std::uint64_t seed, Mode bn_mode,
                                 const GradCheckOptions& options) {
  arch.dropout = 0.0;
  arch.validate();
  const TinyProblem p = tiny_problem(seed);
  auto params = init_model<double>(arch, p.vocab, nullptr, seed);
  // Zero biases would put all-padding positions exactly on the ReLU kink.
  Rng rng(seed, 0x6a6974);
  for (Param<double>* q : params.params()) {
    if (q->name.ends_with("_b") || q->name == "bn_beta") {
      for (std::size_t i = 0; i < q->value.size(); ++i) q->value[i] = rng.uniform(-0.3, 0.3);
    }
  }
  const Batch batch = tiny_batch(p, arch);
  const BatchNormStats<double> saved = params.bn_stats;
  compute_gradients(params, batch, bn_mode, rng);
  params.bn_stats = saved;
  auto plist = params.params();
  return grad_check([&] { return model_loss(params, batch, bn_mode); },
                    std::span<Param<double>* const>(plist), options);
}

// Self-test suites ------------------------------------------------------------

namespace {

struct Failure {
  std::string detail;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

std::string random_tweet(Rng& rng) {
  static const char* kPieces[] = {
      "hello", "WORLD", "http://t.co/x1", "@someone", "#TagOne", "123", "4.5", ":)",
      ":-(",   "<3",    "!!!",            "???",      "soooo",   "Yes", "   ", "\t",
      "caf\xc3\xa9", "<url>", "<user>", "a",  ",",      "...",     "LOL", "x_y"};
  constexpr std::size_t kCount = sizeof(kPieces) / sizeof(kPieces[0]);
  std::string s;
  const std::size_t n = rng.below(12);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.bernoulli(0.2)) {
      s += static_cast<char>(32 + rng.below(95));
    } else {
      s += kPieces[rng.below(kCount)];
    }
    if (rng.bernoulli(0.7)) s += ' ';
  }
  return s;
}

void suite_text(std::uint64_t seed) {
  Rng rng(seed, 1);
  for (int i = 0; i < 2000; ++i) {
    const std::string raw = random_tweet(rng);
    const std::string once = normalize(raw);
    expect(normalize(once) == once, "normalize not idempotent on '" + raw + "'");
    const auto tokens = tokenize(once);
    std::string joined;
    for (const auto& t : tokens) {
      expect(!t.empty(), "empty token from '" + raw + "'");
      if (!joined.empty()) joined += ' ';
      joined += t;
    }
    expect(tokenize(joined) == tokens, "re-tokenizing changed tokens of '" + raw + "'");
    expect(pos_tag(tokens).size() == tokens.size(), "tag count differs for '" + raw + "'");
  }
}

Tensor<double> random_tensor(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void suite_conv_oracle(std::uint64_t seed) {
  Rng rng(seed, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t cin = 1 + rng.below(4);
    const std::size_t cout = 3;
    const std::size_t w = 1 + rng.below(3);
    const Padding pad = (n >= w && rng.bernoulli(0.5)) ? Padding::kValid : Padding::kSame;
    Tape<double> tape;
    Var x = tape.constant(random_tensor(rng, {n, cin}));
    Var f = tape.constant(random_tensor(rng, {w, cin, cout}));
    Var b = tape.constant(random_tensor(rng, {cout}));
    const Tensor<double>& out = tape.value(conv1d(tape, x, f, b, pad));
    const std::ptrdiff_t off = pad == Padding::kSame ? static_cast<std::ptrdiff_t>((w - 1) / 2) : 0;
    const std::size_t m = pad == Padding::kSame ? n : n - w + 1;
    expect(out.size() == m * cout, "conv1d output size");
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = tape.value(b)[o];
        for (std::size_t j = 0; j < w; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - off;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
          for (std::size_t c = 0; c < cin; ++c) {
            acc += tape.value(x)(static_cast<std::size_t>(src), c) * tape.value(f)(j, c, o);
          }
        }
        worst = std::max(worst, std::abs(acc - out(t, o)));
      }
    }
  }
  expect(worst <= 1e-12, "conv1d max deviation " + fmt(worst));
}

void suite_pool_oracle(std::uint64_t seed) {
  Rng rng(seed, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t c = 1 + rng.below(4);
    const std::size_t len = 1 + rng.below(n);
    Tensor<double> in = random_tensor(rng, {n, c});
    // Duplicate values exercise the first-index tie rule.
    if (n > 1 && rng.bernoulli(0.3)) in(n - 1, 0) = in(0, 0);
    Tape<double> tape;
    Var x = tape.variable(in);
    const std::size_t lens[] = {len};
    Var y = max_over_time(tape, x, std::span<const std::size_t>(lens));
    tape.backward(sum(tape, y));
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t arg = 0;
      for (std::size_t t = 1; t < len; ++t) {
        if (in(t, j) > in(arg, j)) arg = t;
      }
      expect(tape.value(y)[j] == in(arg, j), "max_over_time value");
      for (std::size_t t = 0; t < n; ++t) {
        expect(tape.grad(x)(t, j) == (t == arg ? 1.0 : 0.0), "max_over_time routing");
      }
    }
  }
}

void suite_softmax_bn(std::uint64_t seed) {
  Rng rng(seed, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(6);
    const std::size_t k = 2 + rng.below(4);
    Tensor<double> logits = random_tensor(rng, {b, k});
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] *= 50.0;
    const auto p = softmax_rows(logits);
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        expect(p(i, j) >= 0.0 && p(i, j) <= 1.0, "probability outside [0,1]");
        s += p(i, j);
      }
      expect(std::abs(s - 1.0) < 1e-9, "softmax row sum " + fmt(s));
    }
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 8 + rng.below(8);
    const std::size_t f = 1 + rng.below(5);
    Tensor<double> in = random_tensor(rng, {b, f});
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = in[i] * 3.0 + 2.0;
    Tape<double> tape;
    BatchNormStats<double> stats{Tensor<double>({f}), Tensor<double>({f}, 1.0)};
    Var y = batch_norm(tape, tape.constant(in), tape.constant(Tensor<double>({f}, 1.0)),
                       tape.constant(Tensor<double>({f})), stats, Mode::kTrain, 0.9, 1e-5);
    const auto& out = tape.value(y);
    for (std::size_t j = 0; j < f; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < b; ++i) mean += out(i, j);
      mean /= static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) var += (out(i, j) - mean) * (out(i, j) - mean);
      var /= static_cast<double>(b);
      expect(std::abs(mean) < 1e-6, "batch norm mean " + fmt(mean));
      expect(std::abs(var - 1.0) < 1e-4, "batch norm variance " + fmt(var));
    }
  }
}

std::string report_detail(const GradCheckReport& r) {
  return "max relative error " + fmt(r.max_rel_error());
}

std::string suite_op_gradients(std::uint64_t seed) {
  Rng rng(seed, 5);
  Param<double> x("x", random_tensor(rng, {6, 5, 3}));
  Param<double> f("f", random_tensor(rng, {3, 3, 4}));
  Param<double> cb("cb", random_tensor(rng, {4}));
  Param<double> w("w", random_tensor(rng, {4, 3}));
  Param<double> db("db", random_tensor(rng, {3}));
  Param<double> g("g", random_tensor(rng, {3}));
  Param<double> beta("beta", random_tensor(rng, {3}));
  Param<double> ow("ow", random_tensor(rng, {3, 2}));
  const std::size_t lens[] = {5, 3, 1, 4, 5, 2};
  const int labels[] = {0, 1, 1, 0, 1, 0};
  std::vector<Param<double>*> ps{&x, &f, &cb, &w, &db, &g, &beta, &ow};
  auto build = [&](Tape<double>& tape) {
    BatchNormStats<double> stats{Tensor<double>({3}), Tensor<double>({3}, 1.0)};
    Var h = relu(tape, conv1d(tape, tape.param(x), tape.param(f), tape.param(cb), Padding::kSame));
    h = max_over_time(tape, h, std::span<const std::size_t>(lens));
    // Train-mode batch norm cancels shifts shared by all rows, which would
    // leave the conv bias with a zero gradient; the side term keeps it live.
    Var side = sum(tape, h);
    h = dense(tape, h, tape.param(w), tape.param(db));
    h = batch_norm(tape, h, tape.param(g), tape.param(beta), stats, Mode::kTrain, 0.9, 1e-5);
    Var logits = dense(tape, h, tape.param(ow), tape.constant(Tensor<double>({2})));
    auto xe = softmax_xent(tape, logits, std::span<const int>(labels));
    const Var decayed[] = {tape.param(f), tape.param(w)};
    return add(tape, add(tape, xe.loss, side),
               l2_penalty(tape, std::span<const Var>(decayed), 0.01));
  };
  for (auto* p : ps) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  auto loss = [&] {
    Tape<double> tape;
    return tape.value(build(tape))[0];
  };
  const auto report = grad_check(loss, std::span<Param<double>* const>(ps));
  expect(report.passed(), "op chain: " + report.to_string());

  // A corrupted gradient must be reported.
  w.grad[0] *= 1.1;
  const auto bad = grad_check(loss, std::span<Param<double>* const>(ps));
  expect(!bad.passed(), "corrupted gradient went unnoticed");
  return report_detail(report);
}

std::string suite_model_gradients(std::uint64_t seed) {
  std::string detail;
  for (Variant v : {Variant::kCnnCharPos, Variant::kCnnChar, Variant::kCnn}) {
    const auto r = model_grad_check(tiny_arch(v), seed, Mode::kEval);
    expect(r.passed(), std::string(variant_name(v)) + ": " + r.to_string());
    if (!detail.empty()) detail += ", ";
    detail += std::string(variant_name(v)) + " " + fmt(r.max_rel_error());
  }
  return "max relative error " + detail;
}

void suite_model_invariants(std::uint64_t seed) {
  const TinyProblem p = tiny_problem(seed, 6, 12);
  const ArchConfig full_arch = tiny_arch();
  ArchConfig word_arch = tiny_arch(Variant::kCnn);
  auto full = init_model<double>(full_arch, p.vocab, nullptr, seed);
  auto word = init_model<double>(word_arch, p.vocab, nullptr, seed + 1);
  full.char_conv_w.value.fill(0.0);
  full.char_conv_b.value.fill(0.0);
  full.pos_emb.value.fill(0.0);
  word.word_emb.value = full.word_emb.value;
  for (std::size_t i = 0; i < word.word_conv_w.size(); ++i) {
    const auto& src = full.word_conv_w[i].value;
    auto& dst = word.word_conv_w[i].value;
    for (std::size_t j = 0; j < dst.dim(0); ++j) {
      for (std::size_t c = 0; c < dst.dim(1); ++c) {
        for (std::size_t o = 0; o < dst.dim(2); ++o) dst(j, c, o) = src(j, c, o);
      }
    }
    word.word_conv_b[i].value = full.word_conv_b[i].value;
  }
  word.dense_w.value = full.dense_w.value;
  word.dense_b.value = full.dense_b.value;
  word.bn_gamma.value = full.bn_gamma.value;
  word.bn_beta.value = full.bn_beta.value;
  word.out_w.value = full.out_w.value;
  word.out_b.value = full.out_b.value;
  const auto a = predict_probs(full, std::span<const TokenizedDoc>(p.docs));
  const auto b = predict_probs(word, std::span<const TokenizedDoc>(p.docs));
  expect(a == b, "zeroed char and POS channels change the word-only output");
  expect(predict_probs(full, std::span<const TokenizedDoc>(p.docs)) == a,
         "eval forward is not deterministic");

  // Shape audit over random small configurations.
  Rng rng(seed, 6);
  for (int trial = 0; trial < 20; ++trial) {
    ArchConfig arch = tiny_arch(static_cast<Variant>(rng.below(3)));
    arch.word_dim = 1 + rng.below(6);
    arch.char_dim = 1 + rng.below(4);
    arch.pos_dim = 1 + rng.below(4);
    arch.char_filters = 1 + rng.below(5);
    arch.char_filter_width = 1 + rng.below(4);
    arch.word_filters_per_width = 1 + rng.below(5);
    arch.word_filter_widths.resize(1 + rng.below(3));
    for (std::size_t i = 0; i < arch.word_filter_widths.size(); ++i) {
      arch.word_filter_widths[i] = i + 1;
    }
    arch.dense_units = 1 + rng.below(6);
    auto m = init_model<double>(arch, p.vocab, nullptr, seed);
    std::vector<const TokenizedDoc*> ptrs;
    for (const auto& d : p.docs) ptrs.push_back(&d);
    const Batch batch = make_batch(std::span<const TokenizedDoc* const>(ptrs), {}, arch);
    Tape<double> tape;
    Rng frng(1);
    const auto fr = forward(tape, m, batch, Mode::kEval, frng);
    const std::size_t B = batch.size, L = batch.length;
    for (const auto& [stage, shape] : fr.shapes) {
      Shape want;
      if (stage == "word_emb") want = {B * L, arch.word_dim};
      if (stage == "char_emb") want = {batch.tokens, batch.char_len, arch.char_dim};
      if (stage == "char_conv") want = {batch.tokens, batch.char_len, arch.char_filters};
      if (stage == "char_summary") want = {batch.tokens, arch.char_filters};
      if (stage == "char_layer") want = {B * L, arch.char_filters};
      if (stage == "pos_emb") want = {B * L, arch.pos_dim};
      if (stage == "fused") want = {B, L, arch.fused_width()};
      if (stage == "word_conv") want = {B, L, arch.word_filters_per_width};
      if (stage == "pooled") want = {B, arch.pooled_width()};
      if (stage == "hidden") want = {B, arch.dense_units};
      if (stage == "logits") want = {B, arch.classes};
      expect(shape == want, "stage " + stage + " has shape " + shape_string(shape) +
                                ", expected " + shape_string(want));
    }
  }
}

void suite_checkpoint(std::uint64_t seed) {
  const TinyProblem p = tiny_problem(seed, 4, 12);
  auto m = init_model<float>(tiny_arch(), p.vocab, nullptr, seed);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("genderfuse-selftest-" + std::to_string(seed));
  std::filesystem::create_directories(dir);
  const auto path = dir / "tiny.gfus";
  save_checkpoint(path, m, p.vocab);
  auto loaded = load_checkpoint<float>(path, &m.arch, p.vocab.fingerprint());
  std::filesystem::remove_all(dir);
  expect(loaded.vocab == p.vocab, "checkpoint vocabulary differs");
  auto a = m.params();
  auto b = loaded.params.params();
  expect(a.size() == b.size(), "checkpoint tensor count differs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    expect(a[i]->value == b[i]->value, "checkpoint tensor " + a[i]->name + " differs");
  }
  expect(predict_probs(m, std::span<const TokenizedDoc>(p.docs)) ==
             predict_probs(loaded.params, std::span<const TokenizedDoc>(p.docs)),
         "reloaded model predicts differently");
}

void suite_protocol(std::uint64_t seed) {
  SynthSpec spec;
  spec.users_per_class = 23;
  spec.tweets_per_user = 2;
  spec.seed = seed;
  const Corpus corpus = gen_gender_corpus(spec);
  expect(corpus == gen_gender_corpus(spec), "synthetic corpus not reproducible");
  for (std::size_t k : {2, 3, 5, 7}) {
    const auto folds = split_folds(corpus, k, seed);
    std::set<std::size_t> seen;
    std::size_t lo = corpus.size(), hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (std::size_t i : f) expect(seen.insert(i).second, "index in two folds");
    }
    expect(seen.size() == corpus.size(), "folds do not cover the corpus");
    expect(hi - lo <= 1, "fold sizes differ by more than one");
  }
  Rng rng(seed, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + 2 * rng.below(4);
    std::vector<std::array<double, 2>> probs;
    const double pm = rng.uniform();
    for (std::size_t i = 0; i < k; ++i) probs.push_back({1.0 - pm, pm});
    const auto pred = vote("u", probs);
    const Gender want = pm > 0.5 ? Gender::kMale : Gender::kFemale;
    expect(pred.voted_gender == want, "identical members outvoted");
    const double pw = want == Gender::kMale ? pm : 1.0 - pm;
    for (double q : pred.fold_probs) expect(q == pw, "member probability altered");
  }
  const double trace[] = {0.5, 0.7, 0.7, 0.6};
  expect(best_epoch(std::span<const double>(trace)) == 2, "best epoch is not the first argmax");
}

double chi2_quadrature(double x) {
  // Upper tail of the df=1 density after substituting t = u^2, by Simpson's
  // rule on [sqrt(x), sqrt(x) + 40].
  const double lo = std::sqrt(x);
  const double hi = lo + 40.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  auto f = [](double u) { return std::exp(-0.5 * u * u); };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0 * 2.0 / std::sqrt(2.0 * std::numbers::pi);
}

void suite_stats(std::uint64_t seed) {
  for (double x = 0.0; x <= 50.0; x += 2.5) {
    const double diff = std::abs(chi2_sf_df1(x) - chi2_quadrature(x));
    expect(diff < 1e-8, "chi2 tail at " + fmt(x) + " off by " + fmt(diff));
  }
  expect(std::abs(chi2_sf_df1(3.841) - 0.05) < 1e-3, "chi2 tail at 3.841");
  Rng rng(seed, 8);
  for (int trial = 0; trial < 500; ++trial) {
    const Cells t{1 + rng.below(1000), 1 + rng.below(1000), 1 + rng.below(1000),
                  1 + rng.below(1000)};
    const double o = odds_ratio(t);
    // Swapping gender rows inverts the ratio; replicating one row's tweets
    // leaves it unchanged. Both are exact for integer cells below 2^53.
    const Cells swapped{t.c, t.d, t.a, t.b};
    expect(odds_ratio(swapped) ==
               static_cast<double>(t.b * t.c) / static_cast<double>(t.a * t.d),
           "odds ratio reciprocal");
    const std::uint64_t k = 1 + rng.below(9);
    expect(odds_ratio(Cells{t.a * k, t.b * k, t.c, t.d}) == o, "odds ratio row scaling");
    const auto r1 = chi2_test(t);
    const auto r2 = chi2_test(Cells{t.a, t.c, t.b, t.d});
    expect(r1.statistic >= 0.0, "negative chi2");
    expect(std::abs(r1.statistic - r2.statistic) <= 1e-9 * std::max(1.0, r1.statistic),
           "chi2 changes under transposition");
  }
  const Cells even{7, 7, 7, 7};
  expect(odds_ratio(even) == 1.0, "balanced table odds ratio");
}

}  // namespace

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  auto quiet = [](auto fn) {
    return [fn](std::uint64_t s) {
      fn(s);
      return std::string();
    };
  };
  const std::vector<std::pair<const char*, std::function<std::string(std::uint64_t)>>> suites{
      {"text_invariants", quiet(suite_text)},
      {"conv1d_oracle", quiet(suite_conv_oracle)},
      {"max_over_time_oracle", quiet(suite_pool_oracle)},
      {"softmax_and_batch_norm", quiet(suite_softmax_bn)},
      {"op_gradients", suite_op_gradients},
      {"model_gradients", suite_model_gradients},
      {"model_invariants", quiet(suite_model_invariants)},
      {"checkpoint_roundtrip", quiet(suite_checkpoint)},
      {"protocol_invariants", quiet(suite_protocol)},
      {"stats_invariants", quiet(suite_stats)},
  };
  std::vector<SuiteResult> out;
  for (const auto& [name, fn] : suites) {
    SuiteResult r;
    r.name = name;
    try {
      r.detail = fn(seed);
      r.passed = true;
    } catch (const Failure& f) {
      r.detail = f.detail;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace genderfuse
