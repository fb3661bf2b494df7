#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "genderfuse/error.hpp"
#include "genderfuse/model.hpp"
#include "genderfuse/verify.hpp"
#include "test_support.hpp"

using namespace genderfuse;

namespace {

std::set<std::string> param_names(const ModelParams<double>& m) {
  std::set<std::string> out;
  for (const auto* p : m.params()) out.insert(p->name);
  return out;
}

std::vector<const TokenizedDoc*> pointers(const std::vector<TokenizedDoc>& docs) {
  std::vector<const TokenizedDoc*> out;
  for (const auto& d : docs) out.push_back(&d);
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("filter counts under both split readings") {
  ArchConfig a;
  CHECK(a.pooled_width() == 3 * 2048);
  a.filter_split = FilterSplit::kTotal;
  a.word_filters_per_width = 10;
  CHECK(a.filters_for_width(0) == 4);
  CHECK(a.filters_for_width(1) == 3);
  CHECK(a.filters_for_width(2) == 3);
  CHECK(a.pooled_width() == 10);
  CHECK(a.fused_width() == 200 + 50 + 10);
  a.variant = Variant::kCnnChar;
  CHECK(a.fused_width() == 250);
  a.variant = Variant::kCnn;
  CHECK(a.fused_width() == 200);
}

TEST_CASE("architecture validation and json round-trip") {
  ArchConfig a = tiny_arch();
  CHECK_NOTHROW(a.validate());
  CHECK(ArchConfig::from_json(a.to_json()) == a);
  ArchConfig bad = a;
  bad.word_filter_widths = {2, 1};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = a;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = a;
  bad.filter_split = FilterSplit::kTotal;
  bad.word_filters_per_width = 2;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_THROWS_AS(parse_variant("rnn"), UsageError);
  const ArchConfig desk = desk_scale(ArchConfig{});
  CHECK(desk.word_filters_per_width == 64);
  CHECK(desk.word_dim == 200);
}

TEST_CASE("variants nest: each adds parameters and keeps the others") {
  const TinyProblem p = tiny_problem(3);
  const auto cnn = param_names(init_model<double>(tiny_arch(Variant::kCnn), p.vocab, nullptr, 1));
  const auto chr = param_names(init_model<double>(tiny_arch(Variant::kCnnChar), p.vocab, nullptr, 1));
  const auto pos = param_names(init_model<double>(tiny_arch(Variant::kCnnCharPos), p.vocab, nullptr, 1));
  CHECK(std::includes(chr.begin(), chr.end(), cnn.begin(), cnn.end()));
  CHECK(std::includes(pos.begin(), pos.end(), chr.begin(), chr.end()));
  CHECK(chr.size() > cnn.size());
  CHECK(pos.size() > chr.size());
}

TEST_CASE("initialization is seed-deterministic and PAD rows are zero") {
  const TinyProblem p = tiny_problem(4);
  auto a = init_model<double>(tiny_arch(), p.vocab, nullptr, 9);
  auto b = init_model<double>(tiny_arch(), p.vocab, nullptr, 9);
  auto c = init_model<double>(tiny_arch(), p.vocab, nullptr, 10);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    differs = differs || pa[i]->value != pc[i]->value;
  }
  CHECK(differs);
  for (std::size_t k = 0; k < a.word_emb.value.dim(1); ++k) CHECK(a.word_emb.value(0, k) == 0.0);
  for (std::size_t k = 0; k < a.char_emb.value.dim(1); ++k) CHECK(a.char_emb.value(0, k) == 0.0);
  for (std::size_t k = 0; k < a.pos_emb.value.dim(1); ++k) CHECK(a.pos_emb.value(0, k) == 0.0);
}

TEST_CASE("stage shapes follow the architecture over random configs") {
  Rng rng(21);
  for (int trial = 0; trial < 15; ++trial) {
    ArchConfig arch = tiny_arch(static_cast<Variant>(rng.below(3)));
    arch.word_dim = 1 + rng.below(6);
    arch.char_filters = 1 + rng.below(5);
    arch.pos_dim = 1 + rng.below(4);
    arch.word_filters_per_width = 1 + rng.below(5);
    arch.dense_units = 1 + rng.below(6);
    const TinyProblem p = tiny_problem(rng.next(), 2 + rng.below(4));
    auto model = init_model<double>(arch, p.vocab, nullptr, rng.next());
    const auto ptrs = pointers(p.docs);
    const Batch batch = make_batch(ptrs, p.labels, arch);
    Tape<double> tape;
    Rng r(1);
    const auto fwd = forward(tape, model, batch, Mode::kEval, r);
    std::map<std::string, Shape> shapes(fwd.shapes.begin(), fwd.shapes.end());
    const std::size_t B = batch.size, L = batch.length;
    CHECK(shapes.at("fused") == Shape{B, L, arch.fused_width()});
    CHECK(shapes.at("pooled") == Shape{B, arch.pooled_width()});
    CHECK(shapes.at("hidden") == Shape{B, arch.dense_units});
    CHECK(shapes.at("logits") == Shape{B, 2});
    CHECK(shapes.count("char_conv") == (arch.uses_chars() ? 1u : 0u));
    CHECK(shapes.count("pos_emb") == (arch.uses_pos() ? 1u : 0u));
    for (std::size_t i = 0; i < B; ++i) {
      CHECK(fwd.probs(i, 0) + fwd.probs(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("eval predictions do not depend on batch companions or padding") {
  const TinyProblem p = tiny_problem(5, 7, 15);
  auto model = init_model<double>(tiny_arch(), p.vocab, nullptr, 2);
  const Tensor<double> together = predict_probs<double>(model, std::span(p.docs), 7);
  for (std::size_t i = 0; i < p.docs.size(); ++i) {
    const Tensor<double> alone = predict_probs<double>(model, std::span(p.docs).subspan(i, 1), 1);
    CHECK(alone(0, 0) == doctest::Approx(together(i, 0)).epsilon(1e-12));
    CHECK(alone(0, 1) == doctest::Approx(together(i, 1)).epsilon(1e-12));
  }
}

TEST_CASE("batches reject mixed vocabularies and missing labels") {
  TinyProblem p = tiny_problem(6);
  auto ptrs = pointers(p.docs);
  CHECK_NOTHROW(make_batch(ptrs, {}, tiny_arch()));
  const std::vector<int> short_labels = {0};
  CHECK_THROWS(make_batch(ptrs, short_labels, tiny_arch()));
  p.docs[1].vocab_fingerprint ^= 1;
  CHECK_THROWS_AS(make_batch(ptrs, p.labels, tiny_arch()), DataError);
}

TEST_CASE("padded word and tag slots hold -1") {
  const TinyProblem p = tiny_problem(7, 5, 10);
  const auto ptrs = pointers(p.docs);
  const Batch b = make_batch(ptrs, p.labels, tiny_arch());
  for (std::size_t d = 0; d < b.size; ++d)
    for (std::size_t t = 0; t < b.length; ++t) {
      const bool pad = t >= b.valid_lens[d];
      CHECK((b.words[d * b.length + t] == -1) == pad);
      CHECK((b.tags[d * b.length + t] == -1) == pad);
      CHECK((b.token_slot[d * b.length + t] == -1) == pad);
    }
}

TEST_CASE("training steps lower the loss and keep PAD rows at zero") {
  const TinyProblem p = tiny_problem(8, 8, 10);
  ArchConfig arch = tiny_arch();
  arch.lr = 0.01;
  auto model = init_model<double>(arch, p.vocab, nullptr, 3);
  Optimizer<double> opt(arch.optimizer_config());
  const auto ptrs = pointers(p.docs);
  const Batch batch = make_batch(ptrs, p.labels, arch);
  Rng rng(4);
  const double first = train_step(model, opt, batch, rng).loss;
  double last = first;
  for (int i = 0; i < 40; ++i) last = train_step(model, opt, batch, rng).loss;
  CHECK(last < first);
  for (std::size_t k = 0; k < model.word_emb.value.dim(1); ++k) CHECK(model.word_emb.value(0, k) == 0.0);
}

TEST_CASE("full-model gradients pass the finite-difference check") {
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 12;
  for (Variant v : {Variant::kCnn, Variant::kCnnChar, Variant::kCnnCharPos}) {
    const auto report = model_grad_check(tiny_arch(v), 5, Mode::kEval, opts);
    INFO(report.to_string());
    CHECK(report.passed());
  }
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  gftest::TempDir dir("ckpt");
  const TinyProblem p = tiny_problem(9);
  auto model = init_model<float>(tiny_arch(), p.vocab, nullptr, 5);
  model.bn_stats.running_mean.fill(0.25f);
  save_checkpoint(dir / "m.gfus", model, p.vocab, {{"fold", 2}});
  const auto loaded = load_checkpoint<float>(dir / "m.gfus");
  CHECK(loaded.vocab == p.vocab);
  CHECK(loaded.extra.at("fold") == 2);
  CHECK(loaded.params.arch == model.arch);
  CHECK(loaded.params.bn_stats.running_mean == model.bn_stats.running_mean);
  const auto a = model.params();
  const auto b = const_cast<ModelParams<float>&>(loaded.params).params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  const auto as_double = load_checkpoint<double>(dir / "m.gfus");
  CHECK(as_double.params.out_w.value[0] == static_cast<double>(model.out_w.value[0]));

  ArchConfig other = tiny_arch();
  other.dense_units += 1;
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.gfus", &other), DataError);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.gfus", nullptr, p.vocab.fingerprint() + 1), DataError);
  std::ofstream(dir / "junk.gfus") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "junk.gfus"), DataError);
}

}  // TEST_SUITE
