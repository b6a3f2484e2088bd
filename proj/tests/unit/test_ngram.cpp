#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "evade/error.hpp"
#include "evade/ngram.hpp"
#include "evade/rng.hpp"

using namespace evade;

namespace {

std::vector<Document> docs_of(const std::vector<std::string>& texts) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.emplace_back("d" + std::to_string(i), texts[i]);
  return out;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

const std::vector<std::string> kToy = {"the cat sat on the mat .", "the dog sat on the log .",
                                       "a cat saw the dog .", "the mat was red ."};

}  // namespace

TEST_CASE("bigram add-alpha estimate") {
  const double alpha = 0.1;
  const auto m = NgramModel::train(docs_of({"a b a b"}), 2, alpha);
  const double v = static_cast<double>(m.vocab_size());
  CHECK(v == 5);
  const TokenId a = m.vocab().id("a");
  const TokenId b = m.vocab().id("b");
  const TokenId ctx[] = {a};
  CHECK(m.prob(ctx, b) == doctest::Approx((2 + alpha) / (2 + alpha * v)).epsilon(1e-12));
  const auto d = m.next_distribution(ctx);
  CHECK(d[b] == doctest::Approx((2 + alpha) / (2 + alpha * v)).epsilon(1e-12));
  CHECK(sum(d) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("unigram model ignores context") {
  const double alpha = 0.5;
  const auto m = NgramModel::train(docs_of({"x y x", "y z"}), 1, alpha);
  // Recount: x2 y2 z1 eos2, total 7.
  const double v = static_cast<double>(m.vocab_size());
  const TokenId x = m.vocab().id("x");
  const TokenId ctx[] = {m.vocab().id("y")};
  CHECK(m.prob({}, x) == doctest::Approx((2 + alpha) / (7 + alpha * v)));
  CHECK(m.prob(ctx, x) == doctest::Approx(m.prob({}, x)));
  CHECK(m.prob({}, Vocabulary::kEos) == doctest::Approx((2 + alpha) / (7 + alpha * v)));
}

TEST_CASE("next_distribution matches a recount table") {
  const double alpha = 0.01;
  const auto docs = docs_of(kToy);
  const auto m = NgramModel::train(docs, 3, alpha);
  const auto& vocab = m.vocab();
  // Oracle: count tokens following the context "the" across padded sequences.
  std::map<TokenId, double> follow;
  double total = 0;
  for (const auto& d : docs) {
    std::vector<TokenId> seq = {Vocabulary::kBos};
    for (const auto& t : tokenize(d.text())) seq.push_back(vocab.id(t));
    seq.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      if (seq[i - 1] == vocab.id("the")) {
        follow[seq[i]] += 1;
        total += 1;
      }
    }
  }
  const TokenId ctx[] = {vocab.id("the")};
  const auto d = m.next_distribution(ctx);
  const double V = static_cast<double>(vocab.size());
  for (TokenId t = 0; t < vocab.size(); ++t) {
    const double c = follow.count(t) ? follow[t] : 0.0;
    CHECK(d[t] == doctest::Approx((c + alpha) / (total + alpha * V)).epsilon(1e-12));
  }
}

TEST_CASE("empty context is the unigram table; long contexts use the trailing tokens") {
  const auto m = NgramModel::train(docs_of(kToy), 3, 0.01);
  const auto& v = m.vocab();
  const auto u = m.next_distribution({});
  CHECK(sum(u) == doctest::Approx(1.0));
  const auto view = m.lookup({});
  CHECK(view.length == 0);
  const TokenId longer[] = {v.id("dog"), v.id("cat"), v.id("sat"), v.id("on")};
  const TokenId trailing[] = {v.id("sat"), v.id("on")};
  CHECK(m.next_distribution(longer) == m.next_distribution(trailing));
}

TEST_CASE("unseen context backs off to a shorter suffix") {
  const auto m = NgramModel::train(docs_of(kToy), 3, 0.01);
  const auto& v = m.vocab();
  const TokenId unseen[] = {v.id("red"), v.id("the")};
  const TokenId shorter[] = {v.id("the")};
  CHECK(m.lookup(unseen).length == 1);
  CHECK(m.next_distribution(unseen) == m.next_distribution(shorter));
}

TEST_CASE("every distribution is normalized with full support") {
  const auto m = NgramModel::train(docs_of(kToy), 3, 1e-4);
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    std::vector<TokenId> ctx;
    const std::size_t len = uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i) ctx.push_back(static_cast<TokenId>(uniform_index(rng, m.vocab_size())));
    const auto d = m.next_distribution(ctx);
    CHECK(sum(d) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(*std::min_element(d.begin(), d.end()) > 0.0);
  }
}

TEST_CASE("larger alpha moves distributions toward uniform") {
  const auto docs = docs_of(kToy);
  const std::vector<double> alphas = {1e-4, 1e-2, 1, 100};
  std::vector<std::vector<TokenId>> contexts = {{}, {3}, {4, 5}};
  for (const auto& ctx : contexts) {
    double prev = 1e9;
    for (double a : alphas) {
      const auto m = NgramModel::train(docs, 3, a);
      const auto d = m.next_distribution(ctx);
      const double uni = 1.0 / static_cast<double>(d.size());
      double l1 = 0;
      for (double p : d) l1 += std::abs(p - uni);
      CHECK(l1 <= prev + 1e-12);
      prev = l1;
    }
  }
}

TEST_CASE("log loss of a single token") {
  // Unigram counts t1 x1 y1 eos1: P(t) -> 0.25 as alpha -> 0.
  const double alpha = 1e-9;
  const auto m = NgramModel::train(docs_of({"t x y"}), 1, alpha);
  const double v = static_cast<double>(m.vocab_size());
  CHECK(m.log_loss("t") == doctest::Approx(-std::log((1 + alpha) / (4 + alpha * v))).epsilon(1e-12));
  CHECK(m.log_loss("t") == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(m.log_loss("  t \n") == m.log_loss("t"));
  CHECK_THROWS_AS(m.log_loss("   "), Error);
}

TEST_CASE("training text beats its shuffled version") {
  const auto m = NgramModel::train(docs_of(kToy), 3, 0.01);
  CHECK(m.log_loss("the cat sat on the mat .") < m.log_loss("mat the on . sat cat the"));
}

TEST_CASE("loss of concatenated sentences is the token-weighted mean") {
  const auto m = NgramModel::train(docs_of(kToy), 3, 0.01);
  const std::string a = "the cat sat on the log.";
  const std::string b = "a dog was red.";
  const auto sa = m.score(a);
  const auto sb = m.score(b);
  const double expected = (m.log_loss(a) * static_cast<double>(sa.tokens) + m.log_loss(b) * static_cast<double>(sb.tokens)) /
                          static_cast<double>(sa.tokens + sb.tokens);
  CHECK(m.log_loss(a + " " + b) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("training is deterministic and save/load preserves the model") {
  const auto docs = docs_of(kToy);
  const auto m1 = NgramModel::train(docs, 3, 0.05);
  const auto m2 = NgramModel::train(docs, 3, 0.05);
  const auto path = std::filesystem::temp_directory_path() / "evade_ngram_test.jsonl";
  m1.save(path);
  const auto m3 = NgramModel::load(path);
  std::filesystem::remove(path);
  CHECK(m3.order() == 3);
  CHECK(m3.alpha() == 0.05);
  CHECK(m3.vocab().tokens() == m1.vocab().tokens());
  for (const auto& ctx : std::vector<std::vector<TokenId>>{{}, {1}, {1, 3}, {3, 4}}) {
    CHECK(m1.next_distribution(ctx) == m2.next_distribution(ctx));
    CHECK(m1.next_distribution(ctx) == m3.next_distribution(ctx));
  }
}

TEST_CASE("training preconditions") {
  CHECK_THROWS_AS(NgramModel::train({}, 3, 0.1), Error);
  CHECK_THROWS_AS(NgramModel::train(docs_of({"a"}), 0, 0.1), Error);
  CHECK_THROWS_AS(NgramModel::train(docs_of({"a"}), 7, 0.1), Error);
  CHECK_THROWS_AS(NgramModel::train(docs_of({"a"}), 2, 0.0), Error);
  CHECK_THROWS_AS(NgramModel::load("/nonexistent/model.jsonl"), Error);
}
