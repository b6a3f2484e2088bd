#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "evade/corpus.hpp"
#include "evade/error.hpp"
#include "evade/rng.hpp"

using namespace evade;
using Tokens = std::vector<std::string>;

namespace {

std::vector<Document> docs_of(const std::vector<std::string>& texts) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.emplace_back("d" + std::to_string(i), texts[i]);
  return out;
}

std::vector<std::string> texts_of(const std::vector<Document>& docs) {
  std::vector<std::string> out;
  for (const auto& d : docs) out.push_back(d.text());
  return out;
}

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("Hello, world!") == Tokens{"Hello", ",", "world", "!"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("A 🐟 b") == Tokens{"A", "🐟", "b"});
}

TEST_CASE("tokenize details") {
  CHECK(tokenize("don't stop-gap") == Tokens{"don't", "stop-gap"});
  CHECK(tokenize("3.14 and 1,000.") == Tokens{"3.14", "and", "1,000", "."});
  CHECK(tokenize("@user #tag # x") == Tokens{"@user", "#tag", "#", "x"});
  CHECK(tokenize("a⟨mask⟩b") == Tokens{"a", "⟨mask⟩", "b"});
  CHECK(tokenize("👍🏻👍") == Tokens{"👍🏻", "👍"});
  CHECK(tokenize("'quoted'") == Tokens{"'", "quoted", "'"});
}

TEST_CASE("join and detokenize round trip through tokenize") {
  const std::vector<std::string> samples = {
      "Hello, world!", "He said (quietly) that 3.5% was fine; no?", "A 🐟 b ⟨mask⟩ c.", "it's @me #now",
      "\"Well,\" said Alice, \"I don't know.\"",
  };
  for (const auto& s : samples) {
    const auto toks = tokenize(s);
    CHECK(tokenize(join_tokens(toks)) == toks);
    CHECK(tokenize(detokenize(toks)) == toks);
  }
  CHECK(detokenize(Tokens{"Hello", ",", "world", "!"}) == "Hello, world!");
  CHECK(detokenize(Tokens{"a", "(", "b", ")"}) == "a (b)");
}

TEST_CASE("split_sentences examples") {
  CHECK(split_sentences("A. B? C!") == Tokens{"A.", "B?", "C!"});
  CHECK(split_sentences("no terminator") == Tokens{"no terminator"});
  CHECK(split_sentences("Mr. Smith left.") == Tokens{"Mr. Smith left."});
  CHECK(split_sentences("Wait!! \"Really?\" Yes.") == Tokens{"Wait!!", "\"Really?\"", "Yes."});
  CHECK(split_sentences("").empty());
}

TEST_CASE("no split after any listed abbreviation") {
  for (auto abbr : sentence_abbreviations()) {
    std::string word(abbr);
    word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    const std::string s = "See " + word + ". Jones today.";
    CAPTURE(s);
    CHECK(split_sentences(s) == Tokens{s});
  }
  // A word outside the list does split.
  CHECK(split_sentences("See Bob. Jones today.").size() == 2);
}

TEST_CASE("sentences concatenate back to the input") {
  const std::string s = "One two.  Three?   Four! Five";
  const auto parts = split_sentences(s);
  std::string joined;
  for (const auto& p : parts) joined += (joined.empty() ? "" : " ") + p;
  CHECK(joined == "One two. Three? Four! Five");
}

TEST_CASE("documents") {
  CHECK_THROWS_AS(Document("x", "   "), Error);
  const Document d("x", " a  b ", Label::Human, {{"source", "s"}});
  CHECK(d.text() == "a b");
  const auto m = d.relabeled(Label::Machine);
  CHECK(m.label() == Label::Machine);
  CHECK(d.label() == Label::Human);
  CHECK(parse_label(to_string(Label::Unlabeled)) == Label::Unlabeled);
  CHECK_THROWS_AS(parse_label("robot"), Error);
}

TEST_CASE("filter_corpus examples") {
  FilterPolicy min5;
  min5.min_chars = 5;
  CHECK(filter_corpus(docs_of({"hello world", "ab", "fine text"}), min5).size() == 2);

  FilterPolicy dd;
  dd.dedupe = true;
  const auto kept = filter_corpus(docs_of({"same", "other", "same"}), dd);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id() == "d0");
  CHECK(kept[1].id() == "d1");

  FilterPolicy latin;
  latin.require_latin_majority = true;
  CHECK(texts_of(filter_corpus(docs_of({"hello", "привет", "123"}), latin)) == Tokens{"hello"});

  FilterPolicy bad;
  bad.min_chars = 10;
  bad.max_chars = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("per-source cap matches a recount") {
  std::vector<Document> docs;
  Rng rng(7);
  for (int i = 0; i < 60; ++i) {
    const std::string src = "s" + std::to_string(uniform_index(rng, 4));
    docs.emplace_back("d" + std::to_string(i), "text " + std::to_string(i), Label::Human,
                      std::map<std::string, std::string>{{"source", src}});
  }
  FilterPolicy p;
  p.max_docs_per_source = 5;
  const auto kept = filter_corpus(docs, p);
  // Oracle: walk the input and keep the first five per source.
  std::map<std::string, int> seen;
  std::vector<std::string> expect;
  for (const auto& d : docs) {
    if (seen[d.meta().at("source")]++ < 5) expect.push_back(d.id());
  }
  std::vector<std::string> got;
  for (const auto& d : kept) got.push_back(d.id());
  CHECK(got == expect);

  std::vector<Document> ten;
  for (int i = 0; i < 10; ++i) {
    ten.emplace_back("t" + std::to_string(i), "x" + std::to_string(i), Label::Human,
                     std::map<std::string, std::string>{{"source", "one"}});
  }
  const auto first5 = filter_corpus(ten, p);
  REQUIRE(first5.size() == 5);
  CHECK(first5.back().id() == "t4");
}

TEST_CASE("filter is idempotent") {
  FilterPolicy p;
  p.min_chars = 3;
  p.max_chars = 12;
  p.dedupe = true;
  p.require_latin_majority = true;
  const auto docs = docs_of({"ok text", "ok text", "x", "a much longer line here", "日本語のテキスト", "short", "fine"});
  const auto once = filter_corpus(docs, p);
  const auto twice = filter_corpus(once, p);
  CHECK(texts_of(once) == texts_of(twice));
}

TEST_CASE("build_vocab examples") {
  const auto v1 = build_vocab(docs_of({"a a b"}), 2);
  CHECK(v1.size() == 4);
  CHECK(v1.token(0) == kUnkToken);
  CHECK(v1.token(1) == kBosToken);
  CHECK(v1.token(2) == kEosToken);
  CHECK(v1.token(3) == "a");

  const auto v2 = build_vocab(docs_of({"a b", "b c"}), 1);
  CHECK(v2.size() == 6);
  for (const char* t : {"a", "b", "c"}) CHECK(v2.find(t).has_value());
  CHECK(v2.id("zzz") == Vocabulary::kUnk);

  CHECK_THROWS_AS(build_vocab({}, 1), Error);
}

TEST_CASE("build_vocab matches a brute-force recount") {
  Rng rng(11);
  const std::vector<std::string> words = {"the", "cat", "sat", "on", "a", "mat", "dog", "ran", "far", "away",
                                          "quick", "brown", "fox", "jumps", "over", "lazy"};
  std::vector<std::string> texts;
  for (int i = 0; i < 100; ++i) {
    std::string t;
    const std::size_t len = 1 + uniform_index(rng, 8);
    for (std::size_t k = 0; k < len; ++k) t += words[uniform_index(rng, words.size())] + " ";
    texts.push_back(t);
  }
  const auto vocab = build_vocab(docs_of(texts), 3);
  std::unordered_map<std::string, std::uint64_t> recount;
  for (const auto& t : texts) {
    std::size_t pos = 0;
    while (pos < t.size()) {
      const auto sp = t.find(' ', pos);
      ++recount[t.substr(pos, sp - pos)];
      pos = sp + 1;
    }
  }
  std::size_t expected = 0;
  for (const auto& [w, c] : recount) {
    if (c >= 3) {
      ++expected;
      REQUIRE(vocab.find(w).has_value());
      CHECK(vocab.count(*vocab.find(w)) == c);
    } else {
      CHECK_FALSE(vocab.find(w).has_value());
    }
  }
  CHECK(vocab.size() == expected + Vocabulary::kReserved);
}

TEST_CASE("jsonl round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "evade_corpus_test";
  std::filesystem::create_directories(dir);
  const std::vector<Document> docs = {Document("a", "first 🐟", Label::Human, {{"source", "x"}}),
                                      Document("b", "second \"q\"", Label::Machine)};
  write_jsonl(dir / "d.jsonl", docs);
  const auto back = read_jsonl(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].text() == "first 🐟");
  CHECK(back[0].meta().at("source") == "x");
  CHECK(back[1].label() == Label::Machine);
  CHECK(to_jsonl_line(docs[1]) == R"({"id":"b","label":"machine","meta":{},"text":"second \"q\""})");
  CHECK_THROWS_AS(from_jsonl_line("{not json"), Error);
  CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), Error);
  std::filesystem::remove_all(dir);
}
