#include "genderfuse/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "genderfuse/error.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host byte order");

using nlohmann::json;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kCnn: return "cnn";
    case Variant::kCnnChar: return "cnn_char";
    case Variant::kCnnCharPos: return "cnn_char_pos";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "cnn") return Variant::kCnn;
  if (n == "cnn_char") return Variant::kCnnChar;
  if (n == "cnn_char_pos") return Variant::kCnnCharPos;
  throw UsageError("unknown architecture '" + std::string(name) +
                   "' (expected cnn, cnn_char or cnn_char_pos)");
}

std::string_view filter_split_name(FilterSplit s) {
  return s == FilterSplit::kPerWidth ? "per_width" : "total";
}

FilterSplit parse_filter_split(std::string_view name) {
  if (name == "per_width") return FilterSplit::kPerWidth;
  if (name == "total") return FilterSplit::kTotal;
  throw UsageError("unknown filter split '" + std::string(name) +
                   "' (expected per_width or total)");
}

std::size_t ArchConfig::fused_width() const {
  return word_dim + (uses_chars() ? char_filters : 0) + (uses_pos() ? pos_dim : 0);
}

std::size_t ArchConfig::filters_for_width(std::size_t index) const {
  if (filter_split == FilterSplit::kPerWidth) return word_filters_per_width;
  const std::size_t n = word_filter_widths.size();
  return word_filters_per_width / n + (index < word_filters_per_width % n ? 1 : 0);
}

std::size_t ArchConfig::pooled_width() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < word_filter_widths.size(); ++i) total += filters_for_width(i);
  return total;
}

OptimizerConfig ArchConfig::optimizer_config() const {
  OptimizerConfig c;
  c.kind = optimizer;
  c.lr = lr;
  return c;
}

void ArchConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw UsageError(std::string(name) + " must be positive");
  };
  positive(word_dim, "word_dim");
  positive(batch_size, "batch_size");
  positive(dense_units, "dense_units");
  if (uses_chars()) {
    positive(char_dim, "char_dim");
    positive(char_filters, "char_filters");
    positive(char_filter_width, "char_filter_width");
  }
  if (uses_pos()) positive(pos_dim, "pos_dim");
  if (word_filter_widths.empty()) throw UsageError("word_filter_widths must not be empty");
  for (std::size_t i = 0; i < word_filter_widths.size(); ++i) {
    positive(word_filter_widths[i], "word filter width");
    if (i > 0 && word_filter_widths[i] <= word_filter_widths[i - 1]) {
      throw UsageError("word_filter_widths must be strictly ascending");
    }
  }
  for (std::size_t i = 0; i < word_filter_widths.size(); ++i) {
    if (filters_for_width(i) == 0) {
      throw UsageError("word_filters_per_width leaves a width with no filters");
    }
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (!(l2 >= 0.0)) throw UsageError("l2 must be non-negative");
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (classes != 2) throw UsageError("classes must be 2");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw UsageError("bn_momentum must lie in [0, 1)");
  if (!(bn_eps > 0.0)) throw UsageError("bn_eps must be positive");
  if (!(init_scale >= 0.0)) throw UsageError("init_scale must be non-negative");
}

json ArchConfig::to_json() const {
  return json{{"variant", variant_name(variant)},
              {"word_dim", word_dim},
              {"char_dim", char_dim},
              {"pos_dim", pos_dim},
              {"char_filters", char_filters},
              {"char_filter_width", char_filter_width},
              {"word_filter_widths", word_filter_widths},
              {"word_filters_per_width", word_filters_per_width},
              {"filter_split", filter_split_name(filter_split)},
              {"dense_units", dense_units},
              {"dropout", dropout},
              {"l2", l2},
              {"lr", lr},
              {"batch_size", batch_size},
              {"classes", classes},
              {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
              {"bn_momentum", bn_momentum},
              {"bn_eps", bn_eps},
              {"init_scale", init_scale},
              {"freeze_word_embeddings", freeze_word_embeddings}};
}

ArchConfig ArchConfig::from_json(const json& j) {
  try {
    ArchConfig a;
    a.variant = parse_variant(j.at("variant").get<std::string>());
    a.word_dim = j.at("word_dim").get<std::size_t>();
    a.char_dim = j.at("char_dim").get<std::size_t>();
    a.pos_dim = j.at("pos_dim").get<std::size_t>();
    a.char_filters = j.at("char_filters").get<std::size_t>();
    a.char_filter_width = j.at("char_filter_width").get<std::size_t>();
    a.word_filter_widths = j.at("word_filter_widths").get<std::vector<std::size_t>>();
    a.word_filters_per_width = j.at("word_filters_per_width").get<std::size_t>();
    a.filter_split = parse_filter_split(j.at("filter_split").get<std::string>());
    a.dense_units = j.at("dense_units").get<std::size_t>();
    a.dropout = j.at("dropout").get<double>();
    a.l2 = j.at("l2").get<double>();
    a.lr = j.at("lr").get<double>();
    a.batch_size = j.at("batch_size").get<std::size_t>();
    a.classes = j.at("classes").get<std::size_t>();
    a.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? OptimizerKind::kSgd
                                                                 : OptimizerKind::kAdam;
    a.bn_momentum = j.at("bn_momentum").get<double>();
    a.bn_eps = j.at("bn_eps").get<double>();
    a.init_scale = j.at("init_scale").get<double>();
    a.freeze_word_embeddings = j.at("freeze_word_embeddings").get<bool>();
    return a;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed architecture record: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed architecture record: ") + e.what());
  }
}

ArchConfig desk_scale(ArchConfig arch) {
  arch.word_filters_per_width = 64;
  arch.filter_split = FilterSplit::kPerWidth;
  arch.dense_units = 64;
  return arch;
}

// ModelParams ---------------------------------------------------------------

template <typename T>
std::vector<Param<T>*> ModelParams<T>::params() {
  std::vector<Param<T>*> out{&word_emb};
  if (arch.uses_chars()) {
    out.push_back(&char_emb);
    out.push_back(&char_conv_w);
    out.push_back(&char_conv_b);
  }
  if (arch.uses_pos()) out.push_back(&pos_emb);
  for (std::size_t i = 0; i < word_conv_w.size(); ++i) {
    out.push_back(&word_conv_w[i]);
    out.push_back(&word_conv_b[i]);
  }
  for (Param<T>* p : {&dense_w, &dense_b, &bn_gamma, &bn_beta, &out_w, &out_b}) out.push_back(p);
  return out;
}

template <typename T>
std::vector<const Param<T>*> ModelParams<T>::params() const {
  auto mut = const_cast<ModelParams<T>*>(this)->params();
  return {mut.begin(), mut.end()};
}

namespace {

template <typename U, typename T>
Param<U> cast_param(const Param<T>& p) {
  Param<U> out(p.name, p.value.template cast<U>(), p.decay);
  out.trainable = p.trainable;
  return out;
}

}  // namespace

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.arch = arch;
  out.vocab_fingerprint = vocab_fingerprint;
  out.word_emb = cast_param<U>(word_emb);
  out.char_emb = cast_param<U>(char_emb);
  out.pos_emb = cast_param<U>(pos_emb);
  out.char_conv_w = cast_param<U>(char_conv_w);
  out.char_conv_b = cast_param<U>(char_conv_b);
  for (const auto& p : word_conv_w) out.word_conv_w.push_back(cast_param<U>(p));
  for (const auto& p : word_conv_b) out.word_conv_b.push_back(cast_param<U>(p));
  out.dense_w = cast_param<U>(dense_w);
  out.dense_b = cast_param<U>(dense_b);
  out.bn_gamma = cast_param<U>(bn_gamma);
  out.bn_beta = cast_param<U>(bn_beta);
  out.bn_stats.running_mean = bn_stats.running_mean.template cast<U>();
  out.bn_stats.running_var = bn_stats.running_var.template cast<U>();
  out.out_w = cast_param<U>(out_w);
  out.out_b = cast_param<U>(out_b);
  return out;
}

PretrainedVectors read_pretrained(const std::filesystem::path& path, std::size_t dim,
                                  const Vocab* keep) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pretrained embedding file " + path.string());
  PretrainedVectors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<float> vec;
    vec.reserve(dim);
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok +
                        "'");
      }
      vec.push_back(v);
    }
    if (vec.size() != dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": vector for '" + word +
                      "' has dimension " + std::to_string(vec.size()) + ", expected " +
                      std::to_string(dim));
    }
    if (keep != nullptr && keep->word_id(word) == Vocab::kUnk) continue;
    out.emplace(std::move(word), std::move(vec));
  }
  return out;
}

template <typename T>
ModelParams<T> init_model(const ArchConfig& arch, const Vocab& vocab,
                          const PretrainedVectors* pretrained, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed, 0x696e6974);
  const T scale = static_cast<T>(arch.init_scale);
  auto uniform = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0)) * scale;
    return t;
  };
  auto zero_row0 = [](Tensor<T>& t) { std::fill_n(t.data(), t.dim(1), T{0}); };

  ModelParams<T> m;
  m.arch = arch;
  m.vocab_fingerprint = vocab.fingerprint();

  Tensor<T> words = uniform({vocab.word_count(), arch.word_dim});
  if (pretrained != nullptr) {
    for (std::size_t id = 2; id < vocab.word_count(); ++id) {
      auto it = pretrained->find(vocab.word(static_cast<std::int32_t>(id)));
      if (it == pretrained->end()) continue;
      if (it->second.size() != arch.word_dim) {
        throw DataError("pretrained vector for '" + it->first + "' has dimension " +
                        std::to_string(it->second.size()) + ", expected " +
                        std::to_string(arch.word_dim));
      }
      for (std::size_t j = 0; j < arch.word_dim; ++j) {
        words(id, j) = static_cast<T>(it->second[j]);
      }
    }
  }
  zero_row0(words);
  m.word_emb = Param<T>("word_emb", std::move(words));
  m.word_emb.trainable = !arch.freeze_word_embeddings;

  if (arch.uses_chars()) {
    Tensor<T> chars = uniform({vocab.char_count(), arch.char_dim});
    zero_row0(chars);
    m.char_emb = Param<T>("char_emb", std::move(chars));
    m.char_conv_w = Param<T>(
        "char_conv_w", uniform({arch.char_filter_width, arch.char_dim, arch.char_filters}), true);
    m.char_conv_b = Param<T>("char_conv_b", Tensor<T>({arch.char_filters}));
  }
  if (arch.uses_pos()) {
    Tensor<T> tags = uniform({vocab.tag_count(), arch.pos_dim});
    zero_row0(tags);
    m.pos_emb = Param<T>("pos_emb", std::move(tags));
  }
  const std::size_t fused = arch.fused_width();
  for (std::size_t i = 0; i < arch.word_filter_widths.size(); ++i) {
    const std::string w = std::to_string(arch.word_filter_widths[i]);
    const std::size_t nf = arch.filters_for_width(i);
    m.word_conv_w.emplace_back("word_conv" + w + "_w",
                               uniform({arch.word_filter_widths[i], fused, nf}), true);
    m.word_conv_b.emplace_back("word_conv" + w + "_b", Tensor<T>({nf}));
  }
  m.dense_w = Param<T>("dense_w", uniform({arch.pooled_width(), arch.dense_units}), true);
  m.dense_b = Param<T>("dense_b", Tensor<T>({arch.dense_units}));
  m.bn_gamma = Param<T>("bn_gamma", Tensor<T>({arch.dense_units}, T{1}));
  m.bn_beta = Param<T>("bn_beta", Tensor<T>({arch.dense_units}));
  m.bn_stats.running_mean = Tensor<T>({arch.dense_units}, T{0});
  m.bn_stats.running_var = Tensor<T>({arch.dense_units}, T{1});
  m.out_w = Param<T>("out_w", uniform({arch.dense_units, arch.classes}), true);
  m.out_b = Param<T>("out_b", Tensor<T>({arch.classes}));
  return m;
}

// Batching ------------------------------------------------------------------

Batch make_batch(std::span<const TokenizedDoc* const> docs, std::span<const int> labels,
                 const ArchConfig& arch) {
  if (docs.empty()) throw ShapeError("cannot build an empty batch");
  if (!labels.empty() && labels.size() != docs.size()) {
    throw ShapeError("batch has " + std::to_string(docs.size()) + " documents but " +
                     std::to_string(labels.size()) + " labels");
  }
  Batch b;
  b.size = docs.size();
  b.vocab_fingerprint = docs[0]->vocab_fingerprint;
  std::size_t longest_chars = 0;
  for (const TokenizedDoc* d : docs) {
    if (d->tokens.empty()) throw DataError("document for user '" + d->user_id + "' is empty");
    if (d->vocab_fingerprint != b.vocab_fingerprint) {
      throw DataError("document for user '" + d->user_id +
                      "' was encoded with a different vocabulary");
    }
    b.length = std::max(b.length, d->tokens.size());
    for (const Token& t : d->tokens) {
      if (t.chars.empty()) {
        throw DataError("token '" + t.surface + "' of user '" + d->user_id + "' has no characters");
      }
      longest_chars = std::max(longest_chars, t.chars.size());
    }
  }
  const std::size_t slots = b.size * b.length;
  b.words.assign(slots, -1);
  b.tags.assign(slots, -1);
  b.token_slot.assign(slots, -1);
  b.valid_lens.reserve(b.size);
  const bool chars = arch.uses_chars();
  // The character layer runs once per distinct spelling in the batch; every
  // occurrence then gathers that summary.
  std::unordered_map<std::string, std::int32_t> distinct;
  std::vector<const std::vector<std::int32_t>*> spellings;
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& tokens = docs[i]->tokens;
    b.valid_lens.push_back(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const std::size_t slot = i * b.length + t;
      b.words[slot] = tokens[t].word;
      b.tags[slot] = tokens[t].pos;
      if (!chars) continue;
      const auto& cs = tokens[t].chars;
      std::string key(reinterpret_cast<const char*>(cs.data()), cs.size() * sizeof(std::int32_t));
      auto [it, fresh] = distinct.emplace(std::move(key), static_cast<std::int32_t>(spellings.size()));
      if (fresh) spellings.push_back(&cs);
      b.token_slot[slot] = it->second;
    }
  }
  b.tokens = chars ? spellings.size() : 0;
  if (chars) {
    b.char_len = std::max(longest_chars, arch.char_filter_width);
    b.chars.assign(b.tokens * b.char_len, -1);
    b.char_lens.reserve(b.tokens);
    for (std::size_t k = 0; k < spellings.size(); ++k) {
      std::copy(spellings[k]->begin(), spellings[k]->end(),
                b.chars.begin() + static_cast<std::ptrdiff_t>(k * b.char_len));
      // Short tokens are zero-padded up to the filter width and pooled over it.
      b.char_lens.push_back(std::max(spellings[k]->size(), arch.char_filter_width));
    }
  }
  b.labels.assign(labels.begin(), labels.end());
  return b;
}

// Forward -------------------------------------------------------------------

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, ModelParams<T>& params, const Batch& batch, Mode mode,
                         Rng& rng) {
  const ArchConfig& arch = params.arch;
  if (batch.vocab_fingerprint != params.vocab_fingerprint) {
    throw DataError("batch vocabulary fingerprint does not match the model");
  }
  ForwardResult<T> result;
  auto note = [&](const char* stage, Var v) {
    result.shapes.emplace_back(stage, tape.value(v).shape());
  };

  std::vector<Var> parts;
  parts.push_back(gather_rows(tape, tape.param(params.word_emb), std::span(batch.words)));
  note("word_emb", parts.back());
  if (arch.uses_chars()) {
    Var ce = gather_rows(tape, tape.param(params.char_emb), std::span(batch.chars));
    ce = reshape(tape, ce, {batch.tokens, batch.char_len, arch.char_dim});
    note("char_emb", ce);
    Var cc = conv1d(tape, ce, tape.param(params.char_conv_w), tape.param(params.char_conv_b),
                    Padding::kSame);
    cc = relu(tape, cc);
    note("char_conv", cc);
    Var summary = max_over_time(tape, cc, std::span(batch.char_lens));
    note("char_summary", summary);
    parts.push_back(gather_rows(tape, summary, std::span(batch.token_slot)));
    note("char_layer", parts.back());
  }
  if (arch.uses_pos()) {
    parts.push_back(gather_rows(tape, tape.param(params.pos_emb), std::span(batch.tags)));
    note("pos_emb", parts.back());
  }
  Var fused = parts.size() == 1 ? parts[0] : concat_cols(tape, std::span<const Var>(parts));
  fused = reshape(tape, fused, {batch.size, batch.length, arch.fused_width()});
  note("fused", fused);

  std::vector<Var> pooled;
  for (std::size_t i = 0; i < params.word_conv_w.size(); ++i) {
    Var c = conv1d(tape, fused, tape.param(params.word_conv_w[i]),
                   tape.param(params.word_conv_b[i]), Padding::kSame);
    c = relu(tape, c);
    note("word_conv", c);
    pooled.push_back(max_over_time(tape, c, std::span(batch.valid_lens)));
  }
  Var h = pooled.size() == 1 ? pooled[0] : concat_cols(tape, std::span<const Var>(pooled));
  note("pooled", h);
  h = dense(tape, h, tape.param(params.dense_w), tape.param(params.dense_b));
  h = batch_norm(tape, h, tape.param(params.bn_gamma), tape.param(params.bn_beta),
                 params.bn_stats, mode, arch.bn_momentum, arch.bn_eps);
  h = relu(tape, h);
  h = dropout(tape, h, arch.dropout, mode, rng);
  note("hidden", h);
  result.logits = dense(tape, h, tape.param(params.out_w), tape.param(params.out_b));
  note("logits", result.logits);
  result.probs = softmax_rows(tape.value(result.logits));
  return result;
}

template <typename T>
Tensor<T> predict_probs(ModelParams<T>& params, std::span<const TokenizedDoc* const> docs,
                        std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  Tensor<T> out({docs.size(), params.arch.classes});
  Rng unused(0);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const std::size_t end = std::min(docs.size(), start + batch_size);
    Batch batch = make_batch(docs.subspan(start, end - start), {}, params.arch);
    Tape<T> tape;
    auto fr = forward(tape, params, batch, Mode::kEval, unused);
    std::copy_n(fr.probs.data(), fr.probs.size(), out.data() + start * params.arch.classes);
  }
  return out;
}

template <typename T>
Tensor<T> predict_probs(ModelParams<T>& params, std::span<const TokenizedDoc> docs,
                        std::size_t batch_size) {
  std::vector<const TokenizedDoc*> ptrs;
  ptrs.reserve(docs.size());
  for (const auto& d : docs) ptrs.push_back(&d);
  return predict_probs(params, std::span<const TokenizedDoc* const>(ptrs), batch_size);
}

template <typename T>
StepResult compute_gradients(ModelParams<T>& params, const Batch& batch, Mode mode, Rng& rng) {
  if (batch.labels.size() != batch.size) throw UsageError("training batch needs labels");
  auto plist = params.params();
  for (Param<T>* p : plist) p->zero_grad();
  Tape<T> tape;
  auto fr = forward(tape, params, batch, mode, rng);
  auto xent = softmax_xent(tape, fr.logits, std::span(batch.labels));
  std::vector<Var> decayed;
  // Params were registered on the tape in forward(); re-register decayed ones
  // so the penalty accumulates into the same gradient buffers.
  for (Param<T>* p : plist) {
    if (p->decay) decayed.push_back(tape.param(*p));
  }
  Var pen = l2_penalty(tape, std::span<const Var>(decayed), params.arch.l2);
  Var total = add(tape, xent.loss, pen);
  StepResult r;
  r.xent = static_cast<double>(tape.value(xent.loss)[0]);
  r.penalty = static_cast<double>(tape.value(pen)[0]);
  r.loss = static_cast<double>(tape.value(total)[0]);
  if (!std::isfinite(r.loss)) {
    throw DataError("non-finite loss (cross-entropy " + std::to_string(r.xent) + ", penalty " +
                    std::to_string(r.penalty) + ")");
  }
  tape.backward(total);
  return r;
}

template <typename T>
StepResult train_step(ModelParams<T>& params, Optimizer<T>& optimizer, const Batch& batch,
                      Rng& rng) {
  StepResult r = compute_gradients(params, batch, Mode::kTrain, rng);
  auto plist = params.params();
  optimizer.step(std::span<Param<T>* const>(plist));
  auto zero_row0 = [](Param<T>& p) {
    if (p.value.rank() == 2) std::fill_n(p.value.data(), p.value.dim(1), T{0});
  };
  zero_row0(params.word_emb);
  if (params.arch.uses_chars()) zero_row0(params.char_emb);
  if (params.arch.uses_pos()) zero_row0(params.pos_emb);
  return r;
}

// Checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'F', 'U', 'S'};

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(s, &used, 16);
  if (used != s.size()) throw DataError("bad fingerprint '" + s + "'");
  return v;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> stored_tensors(const ModelParams<T>& m) {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const Param<T>* p : m.params()) out.emplace_back(p->name, &p->value);
  out.emplace_back("bn_running_mean", &m.bn_stats.running_mean);
  out.emplace_back("bn_running_var", &m.bn_stats.running_var);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> stored_tensors(ModelParams<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (Param<T>* p : m.params()) out.emplace_back(p->name, &p->value);
  out.emplace_back("bn_running_mean", &m.bn_stats.running_mean);
  out.emplace_back("bn_running_var", &m.bn_stats.running_var);
  return out;
}

template <typename S, typename T>
void copy_payload(const char* src, Tensor<T>& dst) {
  std::vector<S> tmp(dst.size());
  std::memcpy(tmp.data(), src, tmp.size() * sizeof(S));
  for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] = static_cast<T>(tmp[i]);
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params,
                     const Vocab& vocab, const json& extra) {
  if (vocab.fingerprint() != params.vocab_fingerprint) {
    throw DataError("vocabulary does not match the model fingerprint");
  }
  json header;
  header["arch"] = params.arch.to_json();
  header["vocab_fingerprint"] = hex64(params.vocab_fingerprint);
  header["dtype"] = dtype_name<T>();
  header["vocab"] = vocab.words();
  header["extra"] = extra;
  json dir = json::array();
  std::string payload;
  for (const auto& [name, t] : stored_tensors(params)) {
    dir.push_back({{"name", name}, {"shape", t->shape()}, {"offset", payload.size()}});
    payload.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(T));
  }
  header["tensors"] = dir;
  const std::string head = header.dump();
  std::string blob(kMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t head_len = head.size();
  blob.append(reinterpret_cast<const char*>(&version), sizeof(version));
  blob.append(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  blob += head;
  blob += payload;
  write_file_atomic(path, blob);
}

namespace {

bool same_tensor_shapes(const ArchConfig& a, const ArchConfig& b) {
  if (a.variant != b.variant || a.word_dim != b.word_dim || a.dense_units != b.dense_units ||
      a.word_filter_widths != b.word_filter_widths || a.pooled_width() != b.pooled_width()) {
    return false;
  }
  for (std::size_t i = 0; i < a.word_filter_widths.size(); ++i) {
    if (a.filters_for_width(i) != b.filters_for_width(i)) return false;
  }
  if (a.uses_chars() && (a.char_dim != b.char_dim || a.char_filters != b.char_filters ||
                         a.char_filter_width != b.char_filter_width)) {
    return false;
  }
  return !a.uses_pos() || a.pos_dim == b.pos_dim;
}

}  // namespace

template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path, const ArchConfig* expected_arch,
                               std::optional<std::uint64_t> expected_fingerprint) {
  const std::string blob = read_file(path);
  const std::string where = path.string() + ": ";
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw DataError(where + "not a model checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t head_len = 0;
  std::memcpy(&version, blob.data() + 4, sizeof(version));
  std::memcpy(&head_len, blob.data() + 8, sizeof(head_len));
  if (version != kCheckpointVersion) {
    throw DataError(where + "checkpoint format version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (head_len > blob.size() - 16) throw DataError(where + "truncated checkpoint header");
  json header;
  try {
    header = json::parse(blob.substr(16, head_len));
  } catch (const json::exception& e) {
    throw DataError(where + "corrupt checkpoint header: " + e.what());
  }
  const std::size_t payload_start = 16 + head_len;

  LoadedModel<T> out;
  ArchConfig arch;
  std::uint64_t fingerprint = 0;
  std::string dtype;
  try {
    arch = ArchConfig::from_json(header.at("arch"));
    fingerprint = parse_hex64(header.at("vocab_fingerprint").get<std::string>());
    dtype = header.at("dtype").get<std::string>();
    out.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
    out.extra = header.value("extra", json::object());
  } catch (const json::exception& e) {
    throw DataError(where + "corrupt checkpoint header: " + e.what());
  }
  if (out.vocab.fingerprint() != fingerprint) {
    throw DataError(where + "stored vocabulary does not match its fingerprint");
  }
  if (expected_arch != nullptr && expected_arch->variant != arch.variant) {
    throw DataError(where + "checkpoint architecture " + std::string(variant_name(arch.variant)) +
                    " does not match requested " +
                    std::string(variant_name(expected_arch->variant)));
  }
  if (expected_arch != nullptr && !same_tensor_shapes(*expected_arch, arch)) {
    throw DataError(where + "checkpoint layer sizes " + arch.to_json().dump() +
                    " do not match the requested architecture");
  }
  if (expected_fingerprint && *expected_fingerprint != fingerprint) {
    throw DataError(where + "vocabulary fingerprint " + hex64(fingerprint) +
                    " does not match expected " + hex64(*expected_fingerprint));
  }
  if (dtype != "f32" && dtype != "f64") throw DataError(where + "unknown dtype '" + dtype + "'");
  const std::size_t elem = dtype == "f32" ? 4 : 8;

  out.params = init_model<T>(arch, out.vocab, nullptr, 0);
  std::unordered_map<std::string, json> dir;
  for (const auto& entry : header.at("tensors")) dir[entry.at("name").get<std::string>()] = entry;
  for (auto& [name, t] : stored_tensors(out.params)) {
    auto it = dir.find(name);
    if (it == dir.end()) throw DataError(where + "checkpoint lacks tensor '" + name + "'");
    const Shape shape = it->second.at("shape").template get<Shape>();
    if (shape != t->shape()) {
      throw DataError(where + "tensor '" + name + "' has shape " + shape_string(shape) +
                      ", architecture implies " + shape_string(t->shape()));
    }
    const std::size_t offset = it->second.at("offset").template get<std::size_t>();
    if (payload_start + offset + t->size() * elem > blob.size()) {
      throw DataError(where + "truncated payload for tensor '" + name + "'");
    }
    const char* src = blob.data() + payload_start + offset;
    if (elem == 4) {
      copy_payload<float>(src, *t);
    } else {
      copy_payload<double>(src, *t);
    }
  }
  return out;
}

#define GENDERFUSE_INSTANTIATE(T)                                                               \
  template struct ModelParams<T>;                                                               \
  template ModelParams<T> init_model<T>(const ArchConfig&, const Vocab&,                        \
                                        const PretrainedVectors*, std::uint64_t);               \
  template ForwardResult<T> forward<T>(Tape<T>&, ModelParams<T>&, const Batch&, Mode, Rng&);    \
  template Tensor<T> predict_probs<T>(ModelParams<T>&, std::span<const TokenizedDoc>,          \
                                      std::size_t);                                             \
  template Tensor<T> predict_probs<T>(ModelParams<T>&, std::span<const TokenizedDoc* const>,   \
                                      std::size_t);                                             \
  template StepResult compute_gradients<T>(ModelParams<T>&, const Batch&, Mode, Rng&);          \
  template StepResult train_step<T>(ModelParams<T>&, Optimizer<T>&, const Batch&, Rng&);        \
  template void save_checkpoint<T>(const std::filesystem::path&, const ModelParams<T>&,         \
                                   const Vocab&, const json&);                                  \
  template LoadedModel<T> load_checkpoint<T>(const std::filesystem::path&, const ArchConfig*,   \
                                             std::optional<std::uint64_t>);

GENDERFUSE_INSTANTIATE(float)
GENDERFUSE_INSTANTIATE(double)
#undef GENDERFUSE_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace genderfuse
