#include "doctest.h"
#include "genderfuse/config.hpp"
#include "genderfuse/error.hpp"

using namespace genderfuse;

TEST_SUITE("config") {

TEST_CASE("defaults reproduce the published architecture") {
  const RunConfig c;
  const ArchConfig a = c.arch();
  CHECK(a == ArchConfig{});
  CHECK(a.word_dim == 200);
  CHECK(a.char_dim == 50);
  CHECK(a.pos_dim == 10);
  CHECK(a.char_filters == 50);
  CHECK(a.char_filter_width == 3);
  CHECK(a.word_filter_widths == std::vector<std::size_t>{1, 2, 3});
  CHECK(a.word_filters_per_width == 2048);
  CHECK(a.dropout == 0.2);
  CHECK(a.l2 == 1e-5);
  CHECK(a.lr == 1e-3);
  CHECK(a.batch_size == 64);
  CHECK(c.get_size("folds") == 5);
  CHECK(c.analysis().threshold() == doctest::Approx(0.002));
}

TEST_CASE("parse, merge and dump round-trip") {
  RunConfig c = RunConfig::parse("# comment\nword_dim = 32\n\nword_filter_widths = 2,4\narch=cnn\n");
  CHECK(c.arch().word_dim == 32);
  CHECK(c.arch().variant == Variant::kCnn);
  CHECK(c.get_size_list("word_filter_widths") == std::vector<std::size_t>{2, 4});
  c.merge("dropout = 0.5  # trailing comment\n");
  CHECK(c.get_double("dropout") == 0.5);
  const RunConfig back = RunConfig::parse(c.dump());
  CHECK(back.dump() == c.dump());
  CHECK(back.arch() == c.arch());
  c.set("sublinear_tf", "false");
  CHECK_FALSE(c.tfidf().sublinear_tf);
  CHECK(c.linear().lambda == 1e-4);
}

TEST_CASE("bad keys and values are usage errors with context") {
  CHECK_THROWS_AS(RunConfig::parse("nope = 1\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::parse("word_dim = -3\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::parse("dropout = lots\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::parse("sublinear_tf = maybe\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::parse("just a line\n"), UsageError);
  try {
    RunConfig::parse("word_dim = 8\nbogus = 1\n", "run.cfg");
    FAIL("expected an error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  RunConfig c;
  CHECK_THROWS_AS(c.get("missing"), UsageError);
  c.set("arch", "transformer");
  CHECK_THROWS_AS(c.arch(), UsageError);
}

TEST_CASE("every key is documented") {
  const std::string help = config_help();
  for (const auto& k : config_keys()) {
    CHECK(help.find(k.name) != std::string::npos);
    CHECK_FALSE(k.help.empty());
  }
}

}  // TEST_SUITE
