#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "genderfuse/tensor.hpp"
#include "genderfuse/textpipe.hpp"

namespace genderfuse {

enum class Variant { kCnn, kCnnChar, kCnnCharPos };
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

// How word_filters_per_width is read: that many filters for every width, or
// that many in total, divided across the widths.
enum class FilterSplit { kPerWidth, kTotal };
std::string_view filter_split_name(FilterSplit s);
FilterSplit parse_filter_split(std::string_view name);

struct ArchConfig {
  Variant variant = Variant::kCnnCharPos;
  std::size_t word_dim = 200;
  std::size_t char_dim = 50;
  std::size_t pos_dim = 10;
  std::size_t char_filters = 50;
  std::size_t char_filter_width = 3;
  std::vector<std::size_t> word_filter_widths{1, 2, 3};
  std::size_t word_filters_per_width = 2048;
  FilterSplit filter_split = FilterSplit::kPerWidth;
  std::size_t dense_units = 256;
  double dropout = 0.2;
  double l2 = 1e-5;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t classes = 2;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  double init_scale = 0.05;
  bool freeze_word_embeddings = false;

  bool uses_chars() const { return variant != Variant::kCnn; }
  bool uses_pos() const { return variant == Variant::kCnnCharPos; }
  std::size_t fused_width() const;
  std::size_t filters_for_width(std::size_t index) const;
  std::size_t pooled_width() const;
  OptimizerConfig optimizer_config() const;

  // Throws UsageError describing the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  bool operator==(const ArchConfig&) const = default;
};

// The same architecture at desk scale: 64 filters per width and a smaller
// dense layer, for CPU-bound experiments.
ArchConfig desk_scale(ArchConfig arch);

template <typename T>
struct ModelParams {
  ArchConfig arch;
  std::uint64_t vocab_fingerprint = 0;

  Param<T> word_emb;
  Param<T> char_emb;
  Param<T> pos_emb;
  Param<T> char_conv_w;
  Param<T> char_conv_b;
  std::vector<Param<T>> word_conv_w;
  std::vector<Param<T>> word_conv_b;
  Param<T> dense_w;
  Param<T> dense_b;
  Param<T> bn_gamma;
  Param<T> bn_beta;
  BatchNormStats<T> bn_stats;
  Param<T> out_w;
  Param<T> out_b;

  // Every parameter tensor used by the variant, in a fixed order.
  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;

  template <typename U>
  ModelParams<U> cast() const;
};

// word -> vector, read from whitespace-separated text (token then reals per
// line). Only words accepted by `keep` are retained when it is given.
using PretrainedVectors = std::unordered_map<std::string, std::vector<float>>;
PretrainedVectors read_pretrained(const std::filesystem::path& path, std::size_t dim,
                                  const Vocab* keep = nullptr);

template <typename T>
ModelParams<T> init_model(const ArchConfig& arch, const Vocab& vocab,
                          const PretrainedVectors* pretrained, std::uint64_t seed);

// Padded, id-encoded minibatch. Padded word and tag positions hold -1 so that
// they embed to exact zeros; chars are laid out once per distinct spelling.
struct Batch {
  std::size_t size = 0;    // documents
  std::size_t length = 0;  // padded document length
  std::vector<std::int32_t> words;
  std::vector<std::int32_t> tags;
  std::vector<std::size_t> valid_lens;
  std::size_t tokens = 0;     // distinct spellings across the batch
  std::size_t char_len = 0;   // padded per-spelling char length
  std::vector<std::int32_t> chars;
  std::vector<std::size_t> char_lens;
  std::vector<std::int32_t> token_slot;  // per padded position: spelling index or -1
  std::vector<int> labels;
  std::uint64_t vocab_fingerprint = 0;
};

// `labels` may be empty (inference). Throws when documents disagree on the
// vocabulary fingerprint or a document is empty.
Batch make_batch(std::span<const TokenizedDoc* const> docs, std::span<const int> labels,
                 const ArchConfig& arch);

template <typename T>
struct ForwardResult {
  Var logits;
  Tensor<T> probs;
  // Intermediate shapes keyed by stage name, for auditing.
  std::vector<std::pair<std::string, Shape>> shapes;
};

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, ModelParams<T>& params, const Batch& batch,
                         Mode mode, Rng& rng);

// Class probabilities [docs x classes] in eval mode.
template <typename T>
Tensor<T> predict_probs(ModelParams<T>& params, std::span<const TokenizedDoc* const> docs,
                        std::size_t batch_size = 64);
template <typename T>
Tensor<T> predict_probs(ModelParams<T>& params, std::span<const TokenizedDoc> docs,
                        std::size_t batch_size = 64);

struct StepResult {
  double loss = 0.0;     // total: cross-entropy + penalty
  double xent = 0.0;
  double penalty = 0.0;
};

// Computes loss and gradients without updating anything.
template <typename T>
StepResult compute_gradients(ModelParams<T>& params, const Batch& batch, Mode mode, Rng& rng);

// One optimizer update. PAD rows are re-zeroed afterwards; a non-finite loss
// throws DataError before any parameter changes.
template <typename T>
StepResult train_step(ModelParams<T>& params, Optimizer<T>& optimizer, const Batch& batch,
                      Rng& rng);

// Checkpoints ---------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct LoadedModel {
  ModelParams<T> params;
  Vocab vocab;
  nlohmann::json extra;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params,
                     const Vocab& vocab, const nlohmann::json& extra = nlohmann::json::object());

// Throws DataError on bad magic, version, architecture or fingerprint
// mismatch. The stored precision is converted to T.
template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path,
                               const ArchConfig* expected_arch = nullptr,
                               std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

}  // namespace genderfuse
