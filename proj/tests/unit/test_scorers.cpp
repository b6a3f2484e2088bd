#include <doctest.h>

#include <algorithm>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "evade/error.hpp"
#include "evade/rng.hpp"
#include "evade/scorers.hpp"

using namespace evade;

namespace {

std::vector<Document> docs_of(const std::vector<std::string>& texts) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.emplace_back("d" + std::to_string(i), texts[i]);
  return out;
}

const std::vector<std::string> kReference = {
    "the cat sat on the mat .", "the dog sat on the log .",   "a cat saw the dog .",
    "the mat was red .",        "a red dog ran to the mat .", "the small cat ran away from the dog .",
    "on the log the dog slept .", "the cat and the dog sat on the red mat ."};

std::shared_ptr<const NgramModel> toy_lm() {
  static const auto lm = std::make_shared<const NgramModel>(NgramModel::train(docs_of(kReference), 3, 0.01));
  return lm;
}

}  // namespace

TEST_CASE("tf-idf similarity examples") {
  const std::vector<std::string> uniform = {"a", "b", "c", "d"};
  const TfidfSimilarity sim(uniform);
  CHECK(sim.score("a b c", "a b d") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(sim.score("a b", "c d") == 0.0);
  CHECK(sim.score("a b c", "a b c") == doctest::Approx(1.0));
  CHECK(sim.idf("a") == sim.idf("d"));
  CHECK(sim.idf("a b") == 0.0);
  CHECK_THROWS_AS(sim.score("", "a"), Error);
}

TEST_CASE("tf-idf against a hand cosine with bigrams") {
  const TfidfSimilarity sim(kReference);
  const std::string a = "the cat sat";
  const std::string b = "the dog sat";
  // Oracle: weights idf(f) * tf(f) over unigrams and bigrams, then cosine.
  auto w = [&](const std::string& f) { return sim.idf(f); };
  const double na2 = w("the") * w("the") + w("cat") * w("cat") + w("sat") * w("sat") + w("the cat") * w("the cat") +
                     w("cat sat") * w("cat sat");
  const double nb2 = w("the") * w("the") + w("dog") * w("dog") + w("sat") * w("sat") + w("the dog") * w("the dog") +
                     w("dog sat") * w("dog sat");
  const double dot = w("the") * w("the") + w("sat") * w("sat");
  CHECK(sim.score(a, b) == doctest::Approx(dot / std::sqrt(na2 * nb2)).epsilon(1e-12));
  const double n = static_cast<double>(kReference.size());
  CHECK(w("cat") == doctest::Approx(std::log((1 + n) / (1 + 4)) + 1).epsilon(1e-12));
}

TEST_CASE("similarity is symmetric with unit self-similarity") {
  const TfidfSimilarity sim(kReference);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto& a = kReference[uniform_index(rng, kReference.size())];
    const auto& b = kReference[uniform_index(rng, kReference.size())];
    CHECK(sim(a, b) == doctest::Approx(sim(b, a)).epsilon(1e-12));
    CHECK(sim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sim(a, b) >= -1.0);
    CHECK(sim(a, b) <= 1.0);
  }
  CHECK(sim("Zork", "Zork") == 1.0);
  CHECK(sim("Zork", "Blarg") == 0.0);
}

TEST_CASE("coherence proxy") {
  const LmCoherence coh(toy_lm(), kReference, 1.0);
  double best = 0.0;
  for (const auto& r : kReference) best = std::max(best, coh(r));
  CHECK(best >= 0.5);
  const double fluent = coh("the cat sat on the mat .");
  Rng rng(3);
  const auto& vocab = toy_lm()->vocab();
  for (int trial = 0; trial < 10; ++trial) {
    std::string random;
    for (int k = 0; k < 8; ++k) {
      random += vocab.token(static_cast<TokenId>(Vocabulary::kReserved + uniform_index(rng, vocab.size() - 3))) + " ";
    }
    CAPTURE(random);
    CHECK(coh(random) < 0.5);
    CHECK(coh(random) < fluent);
  }
  // Standardization oracle.
  const double lp = toy_lm()->score(kReference[2]).log_prob / static_cast<double>(toy_lm()->score(kReference[2]).tokens);
  const double z = (lp - coh.reference_mean()) / coh.reference_sd();
  CHECK(coh(kReference[2]) == doctest::Approx(1 / (1 + std::exp(-z))).epsilon(1e-12));
  CHECK_THROWS_AS(LmCoherence(toy_lm(), std::vector<std::string>{"one"}, 1.0), Error);
}

TEST_CASE("log-loss scorer matches the model") {
  const LmLogLoss ll(toy_lm());
  const std::vector<std::string> texts = {"the cat sat .", "dog red the"};
  const auto v = ll.log_loss(texts);
  CHECK(v[0] == toy_lm()->log_loss(texts[0]));
  CHECK(v[1] > v[0]);
}

TEST_CASE("naive bayes detector scorer") {
  auto nb = std::make_shared<const NaiveBayesModel>(NaiveBayesModel::train(
      std::vector<Document>{Document("h", "the cat sat", Label::Human), Document("m", "zap zap", Label::Machine)}, 1.0));
  const NaiveBayesDetector det(nb);
  const std::vector<std::string> texts = {"zap", "the cat"};
  const auto p = det.p_machine(texts);
  CHECK(p[0] == nb->predict("zap").p_machine);
  CHECK(p[0] > 0.5);
  CHECK(p[1] < 0.5);
}

TEST_CASE("local infill keeps fixed tokens and uses the vocabulary") {
  const LmInfill infill(toy_lm());
  const std::string masked = "the ⟨mask⟩ sat on the ⟨mask⟩ .";
  const auto cands = infill.fill_one(masked, 6, std::vector<std::string>{"cat", "mat"});
  REQUIRE(!cands.empty());
  CHECK(cands.size() <= 6);
  for (const auto& c : cands) {
    const auto t = tokenize(c);
    REQUIRE(t.size() == 7);
    CHECK(t[0] == "the");
    CHECK(t[2] == "sat");
    CHECK(t[6] == ".");
    CHECK(t[1] != "cat");
    CHECK(t[5] != "mat");
    for (const auto& tok : t) CHECK(toy_lm()->vocab().find(tok).has_value());
  }
  // Out-of-vocabulary fixed tokens come back verbatim.
  const auto oov = infill.fill_one("Zorblax ⟨mask⟩ the dog .", 3, {});
  REQUIRE(!oov.empty());
  CHECK(tokenize(oov[0])[0] == "Zorblax");
}

TEST_CASE("bindings and names") {
  ScorerBinding b;
  b.backend = Backend::Remote;
  CHECK_THROWS_AS(b.validate(), Error);
  b.endpoint = "http://localhost:1";
  b.timeout_ms = 0;
  CHECK_THROWS_AS(b.validate(), Error);
  for (auto t : {ScorerTask::Detect, ScorerTask::Similarity, ScorerTask::Coherence, ScorerTask::LogLoss,
                 ScorerTask::Infill}) {
    CHECK(parse_task(to_string(t)) == t);
  }
  CHECK(to_string(ScorerTask::LogLoss) == "logloss");
  CHECK(parse_backend("remote") == Backend::Remote);
  CHECK_THROWS_AS(parse_backend("grpc"), Error);
}
