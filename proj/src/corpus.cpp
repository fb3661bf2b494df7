#include "genderfuse/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "genderfuse/error.hpp"
#include "genderfuse/rng.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

using nlohmann::json;

namespace {

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

// Calls fn(json, line_no) for every non-blank line; parse errors carry the
// line number.
template <typename Fn>
void for_each_json_line(std::istream& in, std::string_view source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where(source, line_no) + "invalid JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw DataError(where(source, line_no) + "expected a JSON object");
    }
    try {
      fn(obj, line_no);
    } catch (const json::exception& e) {
      throw DataError(where(source, line_no) + e.what());
    } catch (const DataError& e) {
      throw DataError(where(source, line_no) + e.what());
    }
  }
}

std::string dump_line(const json& obj) {
  try {
    return obj.dump(-1, ' ', false, json::error_handler_t::strict);
  } catch (const json::type_error& e) {
    throw DataError(std::string("cannot serialize record: ") + e.what());
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

template <typename Writer>
void write_via_string(const std::filesystem::path& path, Writer&& w) {
  std::ostringstream out;
  w(out);
  write_file_atomic(path, out.str());
}

}  // namespace

std::string_view gender_name(Gender g) {
  return g == Gender::kFemale ? "female" : "male";
}

Gender parse_gender(std::string_view token) {
  const std::string lower = to_lower(trim(token));
  if (lower == "female") return Gender::kFemale;
  if (lower == "male") return Gender::kMale;
  throw DataError("invalid gender token '" + std::string(token) + "'");
}

std::string_view hbm_name(HbmConstruct c) {
  switch (c) {
    case HbmConstruct::kSusceptibility: return "susceptibility";
    case HbmConstruct::kSeverity: return "severity";
    case HbmConstruct::kBenefits: return "benefits";
    case HbmConstruct::kBarriers: return "barriers";
  }
  return "?";
}

HbmConstruct parse_hbm(std::string_view name) {
  const std::string lower = to_lower(name);
  for (std::size_t i = 0; i < kHbmConstructCount; ++i) {
    auto c = static_cast<HbmConstruct>(i);
    if (lower == hbm_name(c)) return c;
  }
  throw DataError("unknown HBM construct '" + std::string(name) + "'");
}

std::string_view attitude_name(Attitude a) {
  switch (a) {
    case Attitude::kPositive: return "positive";
    case Attitude::kNegative: return "negative";
    case Attitude::kNeutral: return "neutral";
  }
  return "?";
}

Attitude parse_attitude(std::string_view name) {
  const std::string lower = to_lower(name);
  if (lower == "positive") return Attitude::kPositive;
  if (lower == "negative") return Attitude::kNegative;
  if (lower == "neutral") return Attitude::kNeutral;
  throw DataError("unknown TPB attitude '" + std::string(name) + "'");
}

void validate_corpus(const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus[i];
    if (u.user_id.empty()) {
      throw DataError("record " + std::to_string(i) + " has an empty user_id");
    }
    auto [it, inserted] = seen.emplace(u.user_id, i);
    if (!inserted) {
      throw DataError("duplicate user_id '" + u.user_id + "' at records " +
                      std::to_string(it->second) + " and " + std::to_string(i));
    }
    if (u.tweets.empty()) {
      throw DataError("user '" + u.user_id + "' has no tweets");
    }
    for (const auto& t : u.tweets) {
      if (trim(t).empty()) {
        throw DataError("user '" + u.user_id + "' has a blank tweet");
      }
    }
  }
}

// UserRecord ---------------------------------------------------------------

Corpus read_corpus_jsonl(std::istream& in, std::string_view source) {
  Corpus corpus;
  std::unordered_map<std::string, std::size_t> line_of;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    UserRecord rec;
    rec.user_id = obj.at("user_id").get<std::string>();
    if (rec.user_id.empty()) throw DataError("empty user_id");
    if (auto it = obj.find("gender"); it != obj.end() && !it->is_null()) {
      rec.gender = parse_gender(it->get<std::string>());
    }
    rec.tweets = obj.at("tweets").get<std::vector<std::string>>();
    if (rec.tweets.empty()) throw DataError("user '" + rec.user_id + "' has no tweets");
    for (const auto& t : rec.tweets) {
      if (trim(t).empty()) throw DataError("user '" + rec.user_id + "' has a blank tweet");
    }
    auto [it, inserted] = line_of.emplace(rec.user_id, line_no);
    if (!inserted) {
      throw DataError("duplicate user_id '" + rec.user_id + "' (lines " +
                      std::to_string(it->second) + " and " + std::to_string(line_no) + ")");
    }
    corpus.push_back(std::move(rec));
  });
  return corpus;
}

Corpus read_corpus_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_corpus_jsonl(in, path.string());
}

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& u : corpus) {
    json obj;
    obj["user_id"] = u.user_id;
    obj["gender"] = u.gender ? json(gender_name(*u.gender)) : json(nullptr);
    obj["tweets"] = u.tweets;
    out << dump_line(obj) << '\n';
  }
}

void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus) {
  write_via_string(path, [&](std::ostream& out) { write_corpus_jsonl(out, corpus); });
}

// LabeledTweet -------------------------------------------------------------

std::vector<LabeledTweet> read_labeled_jsonl(std::istream& in, std::string_view source) {
  std::vector<LabeledTweet> tweets;
  for_each_json_line(in, source, [&](const json& obj, std::size_t) {
    LabeledTweet t;
    t.tweet_id = obj.at("tweet_id").get<std::string>();
    t.user_id = obj.at("user_id").get<std::string>();
    t.year = obj.at("year").get<int>();
    if (t.year <= 0) throw DataError("year must be positive");
    if (auto it = obj.find("hbm"); it != obj.end() && !it->is_null()) {
      for (const auto& name : *it) {
        t.hbm[static_cast<std::size_t>(parse_hbm(name.get<std::string>()))] = true;
      }
    }
    if (auto it = obj.find("tpb"); it != obj.end() && !it->is_null()) {
      t.tpb = parse_attitude(it->get<std::string>());
    }
    tweets.push_back(std::move(t));
  });
  return tweets;
}

std::vector<LabeledTweet> read_labeled_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_labeled_jsonl(in, path.string());
}

void write_labeled_jsonl(std::ostream& out, const std::vector<LabeledTweet>& tweets) {
  for (const auto& t : tweets) {
    json obj;
    obj["tweet_id"] = t.tweet_id;
    obj["user_id"] = t.user_id;
    obj["year"] = t.year;
    json hbm = json::array();
    for (std::size_t i = 0; i < kHbmConstructCount; ++i) {
      if (t.hbm[i]) hbm.push_back(hbm_name(static_cast<HbmConstruct>(i)));
    }
    obj["hbm"] = std::move(hbm);
    obj["tpb"] = t.tpb ? json(attitude_name(*t.tpb)) : json(nullptr);
    out << dump_line(obj) << '\n';
  }
}

void write_labeled_jsonl(const std::filesystem::path& path,
                         const std::vector<LabeledTweet>& tweets) {
  write_via_string(path, [&](std::ostream& out) { write_labeled_jsonl(out, tweets); });
}

// GenderPrediction ---------------------------------------------------------

std::vector<GenderPrediction> read_predictions_jsonl(std::istream& in,
                                                     std::string_view source) {
  std::vector<GenderPrediction> preds;
  for_each_json_line(in, source, [&](const json& obj, std::size_t) {
    GenderPrediction p;
    p.user_id = obj.at("user_id").get<std::string>();
    p.voted_gender = parse_gender(obj.at("gender").get<std::string>());
    p.fold_probs = obj.at("fold_probs").get<std::vector<double>>();
    p.avg_prob = obj.at("avg_prob").get<double>();
    for (double v : p.fold_probs) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("fold probability outside [0,1]");
    }
    preds.push_back(std::move(p));
  });
  return preds;
}

std::vector<GenderPrediction> read_predictions_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_predictions_jsonl(in, path.string());
}

void write_predictions_jsonl(std::ostream& out, const std::vector<GenderPrediction>& preds) {
  for (const auto& p : preds) {
    json obj;
    obj["user_id"] = p.user_id;
    obj["gender"] = gender_name(p.voted_gender);
    obj["fold_probs"] = p.fold_probs;
    obj["avg_prob"] = p.avg_prob;
    out << dump_line(obj) << '\n';
  }
}

void write_predictions_jsonl(const std::filesystem::path& path,
                             const std::vector<GenderPrediction>& preds) {
  write_via_string(path, [&](std::ostream& out) { write_predictions_jsonl(out, preds); });
}

// PAN import ---------------------------------------------------------------

namespace {

std::map<std::string, Gender> read_truth(const std::filesystem::path& truth_file) {
  auto in = open_in(truth_file);
  std::map<std::string, Gender> truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto sep = row.find(":::");
    if (sep == std::string::npos) {
      throw DataError(where(truth_file.string(), line_no) + "expected 'id:::gender'");
    }
    const std::string id = row.substr(0, sep);
    std::string token = row.substr(sep + 3);
    // Later PAN editions append further ':::'-separated fields.
    if (auto more = token.find(":::"); more != std::string::npos) token.resize(more);
    try {
      truth[id] = parse_gender(token);
    } catch (const DataError&) {
      throw DataError(where(truth_file.string(), line_no) +
                      "gender token outside {female, male}: '" + token + "'");
    }
  }
  return truth;
}

std::vector<std::string> read_author_xml(const std::filesystem::path& file) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(file.string() + ": malformed XML: " + e.message());
  }
  std::vector<std::string> tweets;
  auto author = tree.get_child_optional("author");
  if (!author) throw DataError(file.string() + ": missing <author> root element");
  auto documents = author->get_child_optional("documents");
  if (!documents) return tweets;
  for (const auto& [name, node] : *documents) {
    if (name != "document") continue;
    tweets.push_back(node.get_value<std::string>());
  }
  return tweets;
}

}  // namespace

PanImport import_pan(const std::filesystem::path& author_dir,
                     const std::filesystem::path& truth_file) {
  if (!std::filesystem::is_directory(author_dir)) {
    throw DataError(author_dir.string() + " is not a directory");
  }
  const auto truth = read_truth(truth_file);

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(author_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  PanImport result;
  for (const auto& file : files) {
    UserRecord rec;
    rec.user_id = file.stem().string();
    for (auto& tweet : read_author_xml(file)) {
      if (trim(tweet).empty()) {
        result.warnings.push_back(file.filename().string() + ": skipped blank document");
        continue;
      }
      rec.tweets.push_back(std::move(tweet));
    }
    if (rec.tweets.empty()) {
      result.warnings.push_back(file.filename().string() + ": no tweets, author skipped");
      continue;
    }
    if (auto it = truth.find(rec.user_id); it != truth.end()) {
      rec.gender = it->second;
    } else {
      result.warnings.push_back("author '" + rec.user_id + "' missing from truth file");
    }
    result.corpus.push_back(std::move(rec));
  }
  return result;
}

// Folds --------------------------------------------------------------------

std::vector<Fold> split_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("fold count must be at least 2");
  if (corpus.size() < k) {
    throw DataError("corpus of " + std::to_string(corpus.size()) +
                    " users cannot be split into " + std::to_string(k) + " folds");
  }
  std::array<std::vector<std::size_t>, 2> by_gender;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].gender) {
      throw DataError("user '" + corpus[i].user_id + "' has no gender label");
    }
    by_gender[static_cast<std::size_t>(label_of(*corpus[i].gender))].push_back(i);
  }
  Rng rng(seed, 0x666f6c64);
  std::vector<Fold> folds(k);
  // One continuous round-robin over both strata keeps totals balanced too.
  std::size_t next = 0;
  for (auto& group : by_gender) {
    rng.shuffle(std::span<std::size_t>(group));
    for (std::size_t idx : group) {
      folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> training_indices(const std::vector<Fold>& folds,
                                          std::size_t held_out) {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f == held_out) continue;
    out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace genderfuse
