#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genderfuse/rng.hpp"

namespace gftest {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    genderfuse::Rng rng(std::hash<std::string>{}(tag), 0x746d70);
    path_ = std::filesystem::temp_directory_path() /
            ("gf_" + tag + "_" + std::to_string(rng.next() % 1000000007ULL));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string data_path(const std::string& name) {
  return std::string(GF_TEST_DATA_DIR) + "/" + name;
}

// Tweet-like strings assembled from fragments that exercise every
// normalization rule, mixed with random printable and high bytes.
inline std::string random_tweet(genderfuse::Rng& rng) {
  static const std::vector<std::string> pieces = {
      "http://t.co/x1", "https://a.b/c?d=1", "www.site.org", "@user_1", "@x",
      ":)", ":-)", ":(", ":D", ":P", ";)", ":/", "<3", "(:", ":))",
      "#Tag", "#lowercase", "123", "-4.5", "10:30", "3/14", "$20", "50%",
      "!!!", "???", "?!", "...", ".", ",", "!", "HELLO", "OK", "I", "sooooo",
      "yesss", "word", "don't", "well-known", "<user>", "<url>", "<number>",
      "<hashtag>", "<allcaps>", "<repeat>", "<elong>", "<smile>", "<>", "<a",
      "\t", "  ", "\n", "\xc3\xa9", "\xf0\x9f\x98\x80", "&amp;", "'", "\"", "(", ")"};
  std::string out;
  const std::size_t n = rng.below(12);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = rng.below(4);
    if (r == 0) {
      const std::size_t k = 1 + rng.below(6);
      for (std::size_t c = 0; c < k; ++c) {
        out.push_back(static_cast<char>(rng.bernoulli(0.05) ? 128 + rng.below(128)
                                                             : 32 + rng.below(95)));
      }
    } else {
      out += pieces[rng.below(pieces.size())];
    }
    if (rng.bernoulli(0.7)) out.push_back(' ');
  }
  return out;
}

}  // namespace gftest
