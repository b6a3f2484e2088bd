#include <doctest.h>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "evade/error.hpp"
#include "evade/reward.hpp"
#include "evade/rng.hpp"
#include "reward_fixtures.hpp"

using namespace evade;

namespace {

class FixedDetector : public DetectorScorer {
 public:
  explicit FixedDetector(double p) : p_(p) {}
  std::vector<double> p_machine(std::span<const std::string> texts) const override {
    return std::vector<double>(texts.size(), p_);
  }

 private:
  double p_;
};

class FixedCoherence : public CoherenceScorer {
 public:
  explicit FixedCoherence(double c) : c_(c) {}
  std::vector<double> coherence(std::span<const std::string> texts) const override {
    return std::vector<double>(texts.size(), c_);
  }

 private:
  double c_;
};

RewardEngine engine(double p_machine, double coherence = 0.9) {
  return RewardEngine(RewardConfig{}, std::make_shared<FixedDetector>(p_machine),
                      std::make_shared<FixedCoherence>(coherence),
                      {"the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "away"});
}

}  // namespace

TEST_CASE("every hand-built fixture matches") {
  const auto cases = fixtures::reward_cases();
  CHECK(cases.size() >= 33);
  for (const auto& c : cases) {
    CAPTURE(c.rule);
    CAPTURE(c.name);
    const auto got = c.actual();
    REQUIRE(got.size() == c.expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - c.expected[i]) <= 1e-9);
  }
}

TEST_CASE("rule preconditions") {
  CHECK_THROWS_AS(penalty_special_chars("   "), Error);
  CHECK_THROWS_AS(penalty_repetition(""), Error);
  try {
    penalty_dictionary("42 !!", {"cat"});
    FAIL("expected NoWords");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoWords);
  }
  try {
    penalty_query_repetition("<|endoftext|>", "anything");
    FAIL("expected EmptyQuery");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyQuery);
  }
  const std::vector<std::string> single = {"only one"};
  try {
    penalty_batch_same_start(single);
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyBatch);
  }
}

TEST_CASE("query markers are ignored") {
  CHECK(penalty_query_repetition("<|startoftext|> what is the time", "what is the time") == -1.0);
}

TEST_CASE("tied modal groups are all penalized") {
  const std::vector<std::string> batch = {"a x", "a y", "b x", "b y", "c", "d", "e", "f", "g", "h"};
  const auto p = penalty_batch_same_start(batch);
  CHECK(p[0] == -1.0);
  CHECK(p[1] == -1.0);
  CHECK(p[2] == -1.0);
  CHECK(p[3] == -1.0);
  CHECK(p[4] == 0.0);
}

TEST_CASE("config validation") {
  RewardConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.evasion_scale = 0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = RewardConfig{};
  cfg.batch_start_low = 0.3;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("fuzzed texts keep every penalty in [-1, 0]") {
  Rng rng(5);
  const std::vector<std::string> pieces = {"the", "cat", "!!", "🐟", "42", "<|endoftext|>", "�", " ", "Zq", ",", "é"};
  const std::unordered_set<std::string> dict = {"the", "cat"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s = "w";
    const std::size_t n = 1 + uniform_index(rng, 30);
    for (std::size_t i = 0; i < n; ++i) s += " " + pieces[uniform_index(rng, pieces.size())];
    CAPTURE(s);
    for (double p : {penalty_special_chars(s), penalty_repetition(s), penalty_dictionary(s, dict),
                     penalty_emoji_ratio(s), penalty_emoji_count(s), penalty_query_repetition("the cat", s),
                     penalty_special_tokens(s), penalty_unknown_chars(s)}) {
      CHECK(p <= 0.0);
      CHECK(p >= -1.0);
    }
  }
}

TEST_CASE("engine: clean text with P(human)=0.9 earns 0.8") {
  const auto e = engine(0.1);
  const auto b = e.score("where did it go", "The cat sat on the mat.");
  CHECK_FALSE(b.violates());
  CHECK(b.combined == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(b.detector == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("engine: identical batch trips the same-start rule") {
  const auto e = engine(0.1);
  const std::vector<std::string> q(4, "question");
  const std::vector<std::string> r(4, "The cat sat on the mat.");
  for (const auto& b : e.score_batch(q, r)) {
    CHECK(b.same_start == -1.0);
    CHECK(b.combined == -1.0);
  }
}

TEST_CASE("engine: low coherence dominates a good detector score") {
  const auto e = engine(0.0, 0.2);
  const auto b = e.score("q", "The dog ran far away.");
  CHECK(b.acceptability == doctest::Approx(-0.5));
  CHECK(b.combined == doctest::Approx(-0.5));
}

TEST_CASE("engine: empty response is unacceptable") {
  const auto e = engine(0.0);
  // Eleven texts with distinct starts keep both batch rules quiet.
  std::vector<std::string> r = {""};
  for (const std::string w : {"the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "away"}) {
    r.push_back(w + " cat sat.");
  }
  const std::vector<std::string> q(r.size(), "q");
  const auto out = e.score_batch(q, r);
  CHECK(out[0].acceptability == -1.0);
  CHECK(out[0].combined == -1.0);
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i].combined == doctest::Approx(1.0));
}

TEST_CASE("engine: text without words skips the dictionary rule") {
  const auto e = engine(0.5);
  const auto b = e.penalties("q", "42 17", 0.9);
  CHECK(b.dictionary == 0.0);
}

TEST_CASE("breakdown JSON field names and order") {
  RewardBreakdown b;
  b.repetition = -0.5;
  const auto j = combine(0.3, b).to_json();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  const std::vector<std::string> expected = {"special_chars", "repetition",   "acceptability", "dictionary",
                                             "emoji_ratio",   "emoji_count",  "query_repetition",
                                             "special_tokens", "same_start",  "number_start",  "unknown_chars",
                                             "detector",      "combined"};
  CHECK(keys == expected);
  CHECK(j["combined"] == -0.5);
}

TEST_CASE("dictionary built from case-folded words") {
  const std::vector<Document> docs = {Document("a", "The Cat sat, 42 times.", Label::Human)};
  const auto d = build_dictionary(docs);
  CHECK(d.count("the") == 1);
  CHECK(d.count("cat") == 1);
  CHECK(d.count("42") == 0);
  CHECK(d.count(",") == 0);
}
