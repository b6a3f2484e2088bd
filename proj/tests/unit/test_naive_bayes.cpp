#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evade/error.hpp"
#include "evade/naive_bayes.hpp"
#include "evade/rng.hpp"
#include "oracles.hpp"

using namespace evade;

namespace {

using Labeled = std::vector<std::pair<std::string, Label>>;

std::vector<Document> docs_of(const Labeled& items) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.emplace_back("d" + std::to_string(i), items[i].first, items[i].second);
  return out;
}

}  // namespace

TEST_CASE("two-document likelihoods") {
  const auto m = NaiveBayesModel::train(docs_of({{"a a", Label::Human}, {"b", Label::Machine}}), 1.0);
  const double v = static_cast<double>(m.feature_count());
  CHECK(v == 2);
  CHECK(std::exp(m.log_likelihood(Label::Human, "a")) == doctest::Approx((2 + 1) / (2 + v)).epsilon(1e-12));
  CHECK(std::exp(m.log_likelihood(Label::Machine, "a")) == doctest::Approx(1 / (1 + v)).epsilon(1e-12));
  CHECK(std::exp(m.log_prior(Label::Human)) == doctest::Approx(0.5));
  CHECK(std::exp(m.log_prior(Label::Machine)) == doctest::Approx(0.5));
  CHECK(m.log_likelihood(Label::Human, "unseen") == 0.0);
}

TEST_CASE("posterior matches brute-force Bayes on a five-document corpus") {
  const Labeled corpus = {{"a b c", Label::Human},
                          {"a a d", Label::Human},
                          {"e f b", Label::Machine},
                          {"f f g", Label::Machine},
                          {"c e", Label::Machine}};
  const double alpha = 0.7;
  const auto m = NaiveBayesModel::train(docs_of(corpus), alpha);
  for (const std::string text : {"a", "f", "a f", "b c e g", "d d d", "zz a", "g g f e"}) {
    CAPTURE(text);
    CHECK(std::abs(m.predict(text).p_machine - oracle::nb_posterior(corpus, alpha, text)) <= 1e-9);
  }
}

TEST_CASE("random small corpora agree with the oracle") {
  Rng rng(31);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int trial = 0; trial < 200; ++trial) {
    Labeled corpus;
    const std::size_t n = 2 + uniform_index(rng, 5);
    for (std::size_t i = 0; i < n; ++i) {
      std::string t;
      const std::size_t len = 1 + uniform_index(rng, 5);
      for (std::size_t k = 0; k < len; ++k) t += words[uniform_index(rng, words.size())] + " ";
      corpus.emplace_back(t, i == 0 ? Label::Human : i == 1 ? Label::Machine
                                                            : (uniform_index(rng, 2) ? Label::Human : Label::Machine));
    }
    const double alpha = 0.1 + uniform01(rng);
    const auto m = NaiveBayesModel::train(docs_of(corpus), alpha);
    std::string probe;
    for (int k = 0; k < 4; ++k) probe += words[uniform_index(rng, words.size())] + " ";
    CHECK(std::abs(m.predict(probe).p_machine - oracle::nb_posterior(corpus, alpha, probe)) <= 1e-9);
  }
}

TEST_CASE("verdict invariants") {
  const auto m = NaiveBayesModel::train(
      docs_of({{"the old house", Label::Human}, {"a quiet garden", Label::Human}, {"zap zap bot", Label::Machine},
               {"bot output text", Label::Machine}}),
      1.0);
  const auto v = m.predict("zap bot");
  CHECK(v.p_machine > 0.5);
  CHECK(v.label == Label::Machine);
  CHECK(v.score == doctest::Approx(std::log(v.p_machine / (1 - v.p_machine))));
  const auto prior = m.predict("nothing known here");
  CHECK(prior.p_machine == doctest::Approx(0.5));
  CHECK(m.predict("text output bot").p_machine == m.predict("bot text output").p_machine);
  CHECK_THROWS_AS(m.predict("   "), Error);
  // Appending a machine-leaning token never lowers p_machine.
  double prev = m.predict("the garden").p_machine;
  std::string s = "the garden";
  for (int i = 0; i < 5; ++i) {
    s += " zap";
    const double p = m.predict(s).p_machine;
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(NaiveBayesModel::train(docs_of({{"a", Label::Human}}), 1.0), Error);
  try {
    NaiveBayesModel::train(docs_of({{"a", Label::Machine}}), 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingClass);
  }
  CHECK_THROWS_AS(NaiveBayesModel::train(docs_of({{"a", Label::Human}, {"b", Label::Machine}}), 0.0), Error);
}

TEST_CASE("metrics fixtures") {
  const std::vector<Label> truth = {Label::Machine, Label::Machine, Label::Machine, Label::Machine,
                                    Label::Human,   Label::Human,   Label::Human,   Label::Human};
  const std::vector<Label> guess = {Label::Machine, Label::Machine, Label::Machine, Label::Human,
                                    Label::Machine, Label::Human,   Label::Human,   Label::Human};
  const auto m = compute_metrics(truth, guess);
  CHECK(m.tp == 3);
  CHECK(m.fn == 1);
  CHECK(m.fp == 1);
  CHECK(m.tn == 3);
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.f1 == doctest::Approx(0.75));

  const auto perfect = compute_metrics(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);

  const std::vector<Label> all_human(8, Label::Human);
  const auto constant = compute_metrics(truth, all_human);
  CHECK(constant.accuracy == 0.5);
  CHECK(constant.f1 == 0.0);
}

TEST_CASE("evaluate on a separable set") {
  const auto docs = docs_of({{"red red apple", Label::Human},
                             {"green apple pie", Label::Human},
                             {"bleep bloop", Label::Machine},
                             {"bloop bleep bleep", Label::Machine}});
  const auto m = NaiveBayesModel::train(docs, 1.0);
  const auto metrics = m.evaluate(docs);
  CHECK(metrics.accuracy == 1.0);
  CHECK(metrics.f1 == 1.0);
  std::vector<Document> one_class(docs.begin(), docs.begin() + 2);
  CHECK_THROWS_AS(m.evaluate(one_class), Error);
}

TEST_CASE("batch prediction equals the serial reference; save/load round trip") {
  const auto docs = docs_of({{"the cat sat", Label::Human}, {"a dog ran", Label::Human},
                             {"bot bot says", Label::Machine}, {"says the bot", Label::Machine}});
  const auto m = NaiveBayesModel::train(docs, 0.5, 0.6);
  std::vector<std::string> texts;
  for (int i = 0; i < 300; ++i) texts.push_back(i % 3 ? "the bot ran" : "a cat says bot");
  const auto par = m.predict_batch(texts);
  const auto ser = m.predict_batch_serial(texts);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i].p_machine == ser[i].p_machine);

  const auto path = std::filesystem::temp_directory_path() / "evade_nb_test.json";
  m.save(path);
  const auto back = NaiveBayesModel::load(path);
  std::filesystem::remove(path);
  CHECK(back.threshold() == 0.6);
  CHECK(back.alpha() == 0.5);
  for (const auto& t : {"the bot ran", "a cat", "unknown words"}) {
    CHECK(back.predict(t).p_machine == m.predict(t).p_machine);
  }
  CHECK_THROWS_AS(NaiveBayesModel::load("/nonexistent.json"), Error);
}
