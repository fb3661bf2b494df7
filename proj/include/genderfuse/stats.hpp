#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "genderfuse/corpus.hpp"

namespace genderfuse {

// The five per-year tests: four HBM constructs and positive TPB attitude.
enum class StatConstruct { kSusceptibility, kSeverity, kBenefits, kBarriers, kTpbPositive };
inline constexpr std::size_t kStatConstructCount = 5;
std::string_view stat_construct_name(StatConstruct c);
StatConstruct parse_stat_construct(std::string_view name);

// Which tweets form the "not in construct" cells.
enum class Denominator {
  kAllTweets,    // every same-year tweet lacking the label
  kLabeledOnly,  // only tweets carrying some label of the same model (HBM or TPB)
};

enum class ZeroCellPolicy { kHaldane, kNone };

struct AnalysisConfig {
  double alpha = 0.05;
  std::size_t comparisons = 25;
  ZeroCellPolicy zero_cell = ZeroCellPolicy::kHaldane;
  Denominator denominator = Denominator::kAllTweets;
  bool yates = false;

  void validate() const;
  double threshold() const { return alpha / static_cast<double>(comparisons); }
};

// a = male in construct, b = male not, c = female in construct, d = female not.
struct Cells {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::uint64_t d = 0;
  bool operator==(const Cells&) const = default;
};

struct ConstructTable {
  StatConstruct construct = StatConstruct::kSusceptibility;
  int year = 0;
  Cells cells;
  double odds_ratio = 0.0;
  double chi2 = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// (a d) / (b c); under the Haldane policy all cells get +0.5 when any is zero.
// Without correction a zero denominator yields +infinity (or NaN for 0/0).
double odds_ratio(const Cells& t, ZeroCellPolicy policy = ZeroCellPolicy::kHaldane);

struct Chi2Result {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Survival function of the chi-square distribution with one degree of
// freedom: erfc(sqrt(x / 2)).
double chi2_sf_df1(double x);

// Pearson test of independence on the 2x2 table (df = 1). Throws DataError
// when a row or column margin is zero.
Chi2Result chi2_test(const Cells& t, bool yates = false);

// Counts only; one table per (year, construct) for every year that has
// tweets, years ascending, constructs in enum order. Throws DataError listing
// up to five user ids that have no prediction.
std::vector<ConstructTable> build_tables(std::span<const LabeledTweet> tweets,
                                         std::span<const GenderPrediction> predictions,
                                         const AnalysisConfig& config = {});

// significant <=> p < alpha / comparisons.
void apply_bonferroni(std::span<ConstructTable> tables, const AnalysisConfig& config);

// build_tables, then odds ratios, chi-square tests and Bonferroni flags.
std::vector<ConstructTable> analyze(std::span<const LabeledTweet> tweets,
                                    std::span<const GenderPrediction> predictions,
                                    const AnalysisConfig& config = {});

// Rows ordered by construct then year.
std::string figure_csv(std::span<const ConstructTable> tables);
nlohmann::json figure_json(std::span<const ConstructTable> tables);

}  // namespace genderfuse
