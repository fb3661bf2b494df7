#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genderfuse {

// Label encoding is fixed: female = 0, male = 1.
enum class Gender : std::uint8_t { kFemale = 0, kMale = 1 };

inline int label_of(Gender g) { return static_cast<int>(g); }
inline Gender gender_of_label(int label) {
  return label == 0 ? Gender::kFemale : Gender::kMale;
}
std::string_view gender_name(Gender g);
// Case-insensitive "female"/"male"; anything else throws DataError.
Gender parse_gender(std::string_view token);

struct UserRecord {
  std::string user_id;
  std::optional<Gender> gender;
  std::vector<std::string> tweets;

  bool operator==(const UserRecord&) const = default;
};

using Corpus = std::vector<UserRecord>;

// Throws DataError on empty/duplicate ids, empty tweet lists or blank tweets.
void validate_corpus(const Corpus& corpus);

enum class HbmConstruct : std::uint8_t {
  kSusceptibility = 0,
  kSeverity = 1,
  kBenefits = 2,
  kBarriers = 3,
};
inline constexpr std::size_t kHbmConstructCount = 4;
std::string_view hbm_name(HbmConstruct c);
HbmConstruct parse_hbm(std::string_view name);

enum class Attitude : std::uint8_t { kPositive, kNegative, kNeutral };
std::string_view attitude_name(Attitude a);
Attitude parse_attitude(std::string_view name);

struct LabeledTweet {
  std::string tweet_id;
  std::string user_id;
  int year = 0;
  std::array<bool, kHbmConstructCount> hbm{};
  std::optional<Attitude> tpb;

  bool has(HbmConstruct c) const { return hbm[static_cast<std::size_t>(c)]; }
  bool hbm_related() const { return hbm[0] || hbm[1] || hbm[2] || hbm[3]; }
  bool operator==(const LabeledTweet&) const = default;
};

struct GenderPrediction {
  std::string user_id;
  Gender voted_gender = Gender::kFemale;
  std::vector<double> fold_probs;  // probability of the voted class per fold
  double avg_prob = 0.0;

  bool operator==(const GenderPrediction&) const = default;
};

// JSONL ------------------------------------------------------------------

Corpus read_corpus_jsonl(std::istream& in, std::string_view source = "<stream>");
Corpus read_corpus_jsonl(const std::filesystem::path& path);
void write_corpus_jsonl(std::ostream& out, const Corpus& corpus);
void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus);

std::vector<LabeledTweet> read_labeled_jsonl(std::istream& in,
                                             std::string_view source = "<stream>");
std::vector<LabeledTweet> read_labeled_jsonl(const std::filesystem::path& path);
void write_labeled_jsonl(std::ostream& out, const std::vector<LabeledTweet>& tweets);
void write_labeled_jsonl(const std::filesystem::path& path,
                         const std::vector<LabeledTweet>& tweets);

std::vector<GenderPrediction> read_predictions_jsonl(
    std::istream& in, std::string_view source = "<stream>");
std::vector<GenderPrediction> read_predictions_jsonl(const std::filesystem::path& path);
void write_predictions_jsonl(std::ostream& out,
                             const std::vector<GenderPrediction>& preds);
void write_predictions_jsonl(const std::filesystem::path& path,
                             const std::vector<GenderPrediction>& preds);

// PAN author-profiling distribution: `<id>.xml` per author plus a truth file
// of `id:::gender` rows.
struct PanImport {
  Corpus corpus;
  std::vector<std::string> warnings;
};
PanImport import_pan(const std::filesystem::path& author_dir,
                     const std::filesystem::path& truth_file);

// Cross-validation folds ----------------------------------------------------

using Fold = std::vector<std::size_t>;

// Gender-stratified partition into k folds. Fold sizes and per-gender counts
// differ by at most one; indices within a fold are ascending.
std::vector<Fold> split_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed);

// Indices of every fold except `held_out`, ascending.
std::vector<std::size_t> training_indices(const std::vector<Fold>& folds,
                                          std::size_t held_out);

}  // namespace genderfuse
