#include "genderfuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "genderfuse/error.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

std::string_view stat_construct_name(StatConstruct c) {
  switch (c) {
    case StatConstruct::kSusceptibility: return "susceptibility";
    case StatConstruct::kSeverity: return "severity";
    case StatConstruct::kBenefits: return "benefits";
    case StatConstruct::kBarriers: return "barriers";
    case StatConstruct::kTpbPositive: return "tpb_positive";
  }
  return "?";
}

StatConstruct parse_stat_construct(std::string_view name) {
  for (std::size_t i = 0; i < kStatConstructCount; ++i) {
    const auto c = static_cast<StatConstruct>(i);
    if (stat_construct_name(c) == name) return c;
  }
  throw DataError("unknown construct '" + std::string(name) + "'");
}

void AnalysisConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (comparisons < 1) throw UsageError("comparisons must be at least 1");
}

double odds_ratio(const Cells& t, ZeroCellPolicy policy) {
  double a = static_cast<double>(t.a);
  double b = static_cast<double>(t.b);
  double c = static_cast<double>(t.c);
  double d = static_cast<double>(t.d);
  if (policy == ZeroCellPolicy::kHaldane && (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0)) {
    a += 0.5;
    b += 0.5;
    c += 0.5;
    d += 0.5;
  }
  const double num = a * d;
  const double den = b * c;
  if (den == 0.0) {
    return num == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                      : std::numeric_limits<double>::infinity();
  }
  return num / den;
}

double chi2_sf_df1(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

Chi2Result chi2_test(const Cells& t, bool yates) {
  const double a = static_cast<double>(t.a);
  const double b = static_cast<double>(t.b);
  const double c = static_cast<double>(t.c);
  const double d = static_cast<double>(t.d);
  const double r1 = a + b;
  const double r2 = c + d;
  const double c1 = a + c;
  const double c2 = b + d;
  if (r1 == 0.0 || r2 == 0.0 || c1 == 0.0 || c2 == 0.0) {
    throw DataError("chi-square test undefined: table has an empty row or column (a=" +
                    std::to_string(t.a) + " b=" + std::to_string(t.b) + " c=" +
                    std::to_string(t.c) + " d=" + std::to_string(t.d) + ")");
  }
  const double n = r1 + r2;
  const double observed[4] = {a, b, c, d};
  const double expected[4] = {r1 * c1 / n, r1 * c2 / n, r2 * c1 / n, r2 * c2 / n};
  double stat = 0.0;
  for (int i = 0; i < 4; ++i) {
    double diff = std::abs(observed[i] - expected[i]);
    if (yates) diff = std::max(0.0, diff - 0.5);
    stat += diff * diff / expected[i];
  }
  return {stat, chi2_sf_df1(stat)};
}

namespace {

bool in_construct(const LabeledTweet& t, StatConstruct c) {
  if (c == StatConstruct::kTpbPositive) return t.tpb && *t.tpb == Attitude::kPositive;
  return t.has(static_cast<HbmConstruct>(static_cast<std::size_t>(c)));
}

bool in_denominator(const LabeledTweet& t, StatConstruct c, Denominator denom) {
  if (denom == Denominator::kAllTweets) return true;
  if (c == StatConstruct::kTpbPositive) return t.tpb.has_value();
  return t.hbm_related();
}

}  // namespace

std::vector<ConstructTable> build_tables(std::span<const LabeledTweet> tweets,
                                         std::span<const GenderPrediction> predictions,
                                         const AnalysisConfig& config) {
  std::unordered_map<std::string, Gender> gender;
  for (const auto& p : predictions) gender[p.user_id] = p.voted_gender;
  std::vector<std::string> missing;
  std::unordered_set<std::string> missing_seen;
  std::map<int, std::array<Cells, kStatConstructCount>> by_year;
  for (const auto& t : tweets) {
    auto it = gender.find(t.user_id);
    if (it == gender.end()) {
      if (missing_seen.insert(t.user_id).second && missing.size() < 5) {
        missing.push_back(t.user_id);
      }
      continue;
    }
    const bool male = it->second == Gender::kMale;
    auto& cells = by_year[t.year];
    for (std::size_t i = 0; i < kStatConstructCount; ++i) {
      const auto c = static_cast<StatConstruct>(i);
      if (!in_denominator(t, c, config.denominator)) continue;
      const bool in = in_construct(t, c);
      Cells& cell = cells[i];
      if (male) {
        ++(in ? cell.a : cell.b);
      } else {
        ++(in ? cell.c : cell.d);
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("no gender prediction for " + std::to_string(missing_seen.size()) +
                    " tweet author(s), e.g. " + list);
  }
  std::vector<ConstructTable> out;
  for (const auto& [year, cells] : by_year) {
    for (std::size_t i = 0; i < kStatConstructCount; ++i) {
      ConstructTable t;
      t.construct = static_cast<StatConstruct>(i);
      t.year = year;
      t.cells = cells[i];
      out.push_back(t);
    }
  }
  return out;
}

void apply_bonferroni(std::span<ConstructTable> tables, const AnalysisConfig& config) {
  config.validate();
  const double threshold = config.threshold();
  for (auto& t : tables) t.significant = t.p_value < threshold;
}

std::vector<ConstructTable> analyze(std::span<const LabeledTweet> tweets,
                                    std::span<const GenderPrediction> predictions,
                                    const AnalysisConfig& config) {
  config.validate();
  auto tables = build_tables(tweets, predictions, config);
  for (auto& t : tables) {
    t.odds_ratio = odds_ratio(t.cells, config.zero_cell);
    try {
      const auto r = chi2_test(t.cells, config.yates);
      t.chi2 = r.statistic;
      t.p_value = r.p_value;
    } catch (const DataError& e) {
      throw DataError(std::string(stat_construct_name(t.construct)) + " " +
                      std::to_string(t.year) + ": " + e.what());
    }
  }
  apply_bonferroni(tables, config);
  return tables;
}

namespace {

std::vector<const ConstructTable*> figure_order(std::span<const ConstructTable> tables) {
  std::vector<const ConstructTable*> rows;
  for (const auto& t : tables) rows.push_back(&t);
  std::stable_sort(rows.begin(), rows.end(), [](const auto* x, const auto* y) {
    if (x->construct != y->construct) return x->construct < y->construct;
    return x->year < y->year;
  });
  return rows;
}

}  // namespace

std::string figure_csv(std::span<const ConstructTable> tables) {
  std::ostringstream out;
  out << "construct,year,odds_ratio,chi2,p_value,significant\n";
  for (const auto* t : figure_order(tables)) {
    char p[32];
    std::snprintf(p, sizeof p, "%.6e", t->p_value);
    out << stat_construct_name(t->construct) << ',' << t->year << ','
        << format_fixed(t->odds_ratio, 4) << ',' << format_fixed(t->chi2, 6) << ',' << p << ','
        << (t->significant ? "true" : "false") << '\n';
  }
  return out.str();
}

nlohmann::json figure_json(std::span<const ConstructTable> tables) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto* t : figure_order(tables)) {
    rows.push_back({{"construct", stat_construct_name(t->construct)},
                    {"year", t->year},
                    {"a", t->cells.a},
                    {"b", t->cells.b},
                    {"c", t->cells.c},
                    {"d", t->cells.d},
                    {"odds_ratio", t->odds_ratio},
                    {"chi2", t->chi2},
                    {"p_value", t->p_value},
                    {"significant", t->significant}});
  }
  return rows;
}

}  // namespace genderfuse
