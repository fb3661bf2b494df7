#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genderfuse/baseline.hpp"
#include "genderfuse/model.hpp"
#include "genderfuse/stats.hpp"
#include "genderfuse/textpipe.hpp"

namespace genderfuse {

enum class KeyType { kSize, kDouble, kBool, kString, kSizeList };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
  bool published = false;  // default is the published experimental setting
};

// Every recognized key, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Flat `key = value` settings with `#` comments. Unknown keys and malformed
// values are rejected with file and line context.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, std::string_view source = "<config>");
  // Applies every assignment in `text` on top of the current values.
  void merge(std::string_view text, std::string_view source = "<config>");
  void merge_file(const std::filesystem::path& path);

  // Throws UsageError for unknown keys or values that do not parse.
  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;

  std::size_t get_size(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::size_t> get_size_list(std::string_view key) const;

  ArchConfig arch() const;
  TextConfig text() const;
  TfidfConfig tfidf() const;
  LinearConfig linear() const;
  AnalysisConfig analysis() const;

  // All keys as `key = value` lines, loadable by parse().
  std::string dump() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Key reference for --help output.
std::string config_help();

}  // namespace genderfuse
