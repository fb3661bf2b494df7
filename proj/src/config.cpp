#include "genderfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "genderfuse/error.hpp"
#include "genderfuse/util.hpp"

namespace genderfuse {

const std::vector<ConfigKey>& config_keys() {
  using K = KeyType;
  static const std::vector<ConfigKey> keys = {
      {"arch", K::kString, "cnn_char_pos", "network variant: cnn, cnn_char or cnn_char_pos", false},
      {"word_dim", K::kSize, "200", "word embedding dimension", true},
      {"char_dim", K::kSize, "50", "character embedding dimension", true},
      {"pos_dim", K::kSize, "10", "POS embedding dimension", true},
      {"char_filters", K::kSize, "50", "character-level convolution filters", true},
      {"char_filter_width", K::kSize, "3", "character-level filter width", true},
      {"word_filter_widths", K::kSizeList, "1,2,3", "word-level filter widths", true},
      {"word_filters_per_width", K::kSize, "2048",
       "word-level filters (per width, or in total under filter_split=total); 64 is a "
       "practical CPU setting",
       true},
      {"filter_split", K::kString, "per_width", "per_width or total", false},
      {"dense_units", K::kSize, "256", "hidden dense layer width", false},
      {"dropout", K::kDouble, "0.2", "dropout rate after the hidden layer", true},
      {"l2", K::kDouble, "1e-05", "L2 strength on filters and dense weights", true},
      {"lr", K::kDouble, "0.001", "learning rate", true},
      {"batch_size", K::kSize, "64", "minibatch size", true},
      {"optimizer", K::kString, "adam", "adam or sgd", false},
      {"bn_momentum", K::kDouble, "0.9", "batch-norm running-average momentum", false},
      {"bn_eps", K::kDouble, "1e-05", "batch-norm variance guard", false},
      {"init_scale", K::kDouble, "0.05", "uniform initialization half-width", false},
      {"freeze_word_embeddings", K::kBool, "false", "keep pretrained word vectors fixed", false},
      {"pretrained", K::kString, "",
       "GloVe-format word vectors (published runs used 200-d Twitter GloVe)", false},
      {"folds", K::kSize, "5", "cross-validation folds", true},
      {"epochs", K::kSize, "20", "training epochs per fold", false},
      {"min_word_freq", K::kSize, "2", "minimum corpus frequency for a word id", false},
      {"max_token_chars", K::kSize, "20", "characters kept per token", false},
      {"max_doc_tokens", K::kSize, "4000", "tokens kept per user document", false},
      {"jobs", K::kSize, "1", "folds trained concurrently", false},
      {"ngram_min", K::kSize, "1", "TF-IDF smallest word n-gram", false},
      {"ngram_max", K::kSize, "2", "TF-IDF largest word n-gram", false},
      {"min_df", K::kSize, "2", "TF-IDF minimum document frequency", false},
      {"sublinear_tf", K::kBool, "true", "TF-IDF term frequency 1 + ln(count)", false},
      {"linear_lambda", K::kDouble, "0.0001", "ridge strength of the linear baselines", false},
      {"linear_epochs", K::kSize, "20", "SGD passes of the linear baselines", false},
      {"linear_eta0", K::kDouble, "0.5", "initial SGD step of the linear baselines", false},
      {"alpha", K::kDouble, "0.05", "nominal significance level", true},
      {"comparisons", K::kSize, "25", "Bonferroni comparison count", true},
      {"zero_cell", K::kString, "haldane", "odds-ratio zero-cell policy: haldane or none", false},
      {"denominator", K::kString, "all",
       "not-in-construct cells: all same-year tweets, or labeled (construct-labeled only)",
       false},
      {"yates", K::kBool, "false", "continuity-corrected chi-square", false},
      {"coverage_threshold", K::kDouble, "0.8", "average probability a prediction must exceed",
       true},
  };
  return keys;
}

namespace {

const ConfigKey& find_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw UsageError("unknown config key '" + std::string(name) + "'");
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && !s.empty();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size();
}

bool parse_bool(std::string_view s, bool& out) {
  const std::string v = to_lower(s);
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

bool parse_list(std::string_view s, std::vector<std::size_t>& out) {
  out.clear();
  for (const auto& part : split(s, ',')) {
    std::size_t v = 0;
    if (!parse_size(trim(part), v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

void check_value(const ConfigKey& key, std::string_view value) {
  bool ok = true;
  std::size_t sz = 0;
  double d = 0.0;
  bool b = false;
  std::vector<std::size_t> list;
  switch (key.type) {
    case KeyType::kSize: ok = parse_size(value, sz); break;
    case KeyType::kDouble: ok = parse_double(value, d); break;
    case KeyType::kBool: ok = parse_bool(value, b); break;
    case KeyType::kSizeList: ok = parse_list(value, list); break;
    case KeyType::kString: break;
  }
  if (!ok) {
    static const char* names[] = {"a non-negative integer", "a number", "true or false", "",
                                  "a comma-separated list of integers"};
    throw UsageError("config key '" + key.name + "' expects " +
                     names[static_cast<int>(key.type)] + ", got '" + std::string(value) + "'");
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
  RunConfig c;
  c.merge(text, source);
  return c;
}

void RunConfig::merge(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected key = value");
    try {
      set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot read config file " + path.string());
  }
  merge(text, path.string());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const ConfigKey& k = find_key(key);
  check_value(k, value);
  values_[k.name] = std::string(value);
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

std::size_t RunConfig::get_size(std::string_view key) const {
  std::size_t v = 0;
  parse_size(get(key), v);
  return v;
}

double RunConfig::get_double(std::string_view key) const {
  double v = 0.0;
  parse_double(get(key), v);
  return v;
}

bool RunConfig::get_bool(std::string_view key) const {
  bool v = false;
  parse_bool(get(key), v);
  return v;
}

std::vector<std::size_t> RunConfig::get_size_list(std::string_view key) const {
  std::vector<std::size_t> v;
  parse_list(get(key), v);
  return v;
}

ArchConfig RunConfig::arch() const {
  ArchConfig a;
  a.variant = parse_variant(get("arch"));
  a.word_dim = get_size("word_dim");
  a.char_dim = get_size("char_dim");
  a.pos_dim = get_size("pos_dim");
  a.char_filters = get_size("char_filters");
  a.char_filter_width = get_size("char_filter_width");
  a.word_filter_widths = get_size_list("word_filter_widths");
  a.word_filters_per_width = get_size("word_filters_per_width");
  a.filter_split = parse_filter_split(get("filter_split"));
  a.dense_units = get_size("dense_units");
  a.dropout = get_double("dropout");
  a.l2 = get_double("l2");
  a.lr = get_double("lr");
  a.batch_size = get_size("batch_size");
  const std::string opt = to_lower(get("optimizer"));
  if (opt != "adam" && opt != "sgd") throw UsageError("optimizer must be adam or sgd");
  a.optimizer = opt == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  a.bn_momentum = get_double("bn_momentum");
  a.bn_eps = get_double("bn_eps");
  a.init_scale = get_double("init_scale");
  a.freeze_word_embeddings = get_bool("freeze_word_embeddings");
  a.validate();
  return a;
}

TextConfig RunConfig::text() const {
  TextConfig t;
  t.max_token_chars = get_size("max_token_chars");
  t.max_doc_tokens = get_size("max_doc_tokens");
  if (t.max_token_chars == 0 || t.max_doc_tokens == 0) {
    throw UsageError("max_token_chars and max_doc_tokens must be positive");
  }
  return t;
}

TfidfConfig RunConfig::tfidf() const {
  TfidfConfig c;
  c.ngram_min = get_size("ngram_min");
  c.ngram_max = get_size("ngram_max");
  c.min_df = get_size("min_df");
  c.sublinear_tf = get_bool("sublinear_tf");
  c.validate();
  return c;
}

LinearConfig RunConfig::linear() const {
  LinearConfig c;
  c.lambda = get_double("linear_lambda");
  c.epochs = get_size("linear_epochs");
  c.eta0 = get_double("linear_eta0");
  return c;
}

AnalysisConfig RunConfig::analysis() const {
  AnalysisConfig c;
  c.alpha = get_double("alpha");
  c.comparisons = get_size("comparisons");
  const std::string zc = to_lower(get("zero_cell"));
  if (zc != "haldane" && zc != "none") throw UsageError("zero_cell must be haldane or none");
  c.zero_cell = zc == "haldane" ? ZeroCellPolicy::kHaldane : ZeroCellPolicy::kNone;
  const std::string den = to_lower(get("denominator"));
  if (den != "all" && den != "labeled") throw UsageError("denominator must be all or labeled");
  c.denominator = den == "all" ? Denominator::kAllTweets : Denominator::kLabeledOnly;
  c.yates = get_bool("yates");
  c.validate();
  return c;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + get(k.name) + "\n";
  return out;
}

std::string config_help() {
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.name.size());
  std::string out =
      "Config keys (file: key = value, # comments; GENDERFUSE_CONFIG names a default file;\n"
      "--set key=value overrides). [published] marks defaults taken from the published\n"
      "experimental setup.\n";
  for (const auto& k : config_keys()) {
    out += "  " + k.name + std::string(width - k.name.size() + 2, ' ') + "default " +
           (k.default_value.empty() ? "(none)" : k.default_value) +
           (k.published ? " [published]" : "") + "\n" + std::string(width + 4, ' ') + k.help +
           "\n";
  }
  return out;
}

}  // namespace genderfuse
