#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "evade/error.hpp"
#include "evade/experiments.hpp"

using namespace evade;

namespace {

std::vector<Document> docs(std::size_t n, const std::string& prefix = "h") {
  const std::vector<std::string> lines = {"the cat sat on the mat .", "a dog ran far away .", "birds sing in the morning .",
                                          "the sun is warm today .", "we walked along the river ."};
  std::vector<Document> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(prefix + std::to_string(i), lines[i % lines.size()], Label::Human);
  return out;
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("evade_exp_test_" + name);
}

class StubSimilarity : public SimilarityScorer {
 public:
  std::vector<double> similarity(std::span<const TextPair> pairs) const override {
    return std::vector<double>(pairs.size(), 0.95);
  }
};

class StubCoherence : public CoherenceScorer {
 public:
  std::vector<double> coherence(std::span<const std::string> texts) const override {
    return std::vector<double>(texts.size(), 0.95);
  }
};

class StubLoss : public LogLossScorer {
 public:
  std::vector<double> log_loss(std::span<const std::string> texts) const override {
    std::vector<double> out;
    for (const auto& t : texts) out.push_back(static_cast<double>(t.size()));
    return out;
  }
};

class StubInfill : public InfillScorer {
 public:
  std::vector<std::vector<std::string>> infill(std::span<const std::string> masked, std::size_t n,
                                               std::span<const std::vector<std::string>> = {}) const override {
    std::vector<std::vector<std::string>> out;
    for (const auto& m : masked) {
      std::vector<std::string> c;
      for (const std::string w : {"zed", "ox", "elk"}) {
        auto toks = tokenize(m);
        for (auto& t : toks) {
          if (t == kMaskToken) t = w;
        }
        c.push_back(detokenize(toks));
        if (c.size() == n) break;
      }
      out.push_back(std::move(c));
    }
    return out;
  }
};

}  // namespace

TEST_CASE("splits are disjoint and cover the corpus") {
  const auto all = docs(100);
  const auto s = split_corpus(all, 0.5, 0.3, 4);
  CHECK(s.generator.size() == 50);
  CHECK(s.detector.size() == 30);
  CHECK(s.evaluation.size() == 20);
  std::set<std::string> ids;
  for (const auto* part : {&s.generator, &s.detector, &s.evaluation}) {
    for (const auto& d : *part) ids.insert(d.id());
  }
  CHECK(ids.size() == 100);
  const auto again = split_corpus(all, 0.5, 0.3, 4);
  CHECK(again.generator.front().id() == s.generator.front().id());
}

TEST_CASE("overlapping splits are rejected") {
  DataSplit s;
  s.generator = docs(3);
  s.evaluation = docs(1);
  CHECK_THROWS_AS(check_disjoint(s), Error);
}

TEST_CASE("identical corpora have no quantile gap") {
  const auto a = docs(300);
  const auto r = distribution_report(a, a, 50, 10);
  CHECK(r.gap == doctest::Approx(0.0));
  CHECK(r.quantiles.size() == 50);
  double h = 0.0;
  double m = 0.0;
  for (const auto& b : r.density) {
    h += b.human;
    m += b.machine;
  }
  CHECK(h == doctest::Approx(1.0));
  CHECK(m == doctest::Approx(1.0));
}

TEST_CASE("flatter text shows a positive gap") {
  std::vector<Document> flat;
  for (int i = 0; i < 600; ++i) flat.emplace_back("m" + std::to_string(i), "w" + std::to_string(i) + " x" + std::to_string(i), Label::Machine);
  CHECK(distribution_report(docs(300), flat).gap > 0.5);
}

TEST_CASE("grid cells follow size, strategy, temperature order and match the serial run") {
  const auto human = docs(400);
  const auto lm = NgramModel::train(docs(50), 2, 0.1);
  GridSpec spec;
  spec.temperatures = {0.8, 1.2};
  spec.strategies = {Strategy::Greedy, Strategy::Random};
  spec.sample_sizes = {100, 200};
  spec.replications = 2;
  spec.generation.max_tokens = 10;
  const auto cells = run_grid(human, lm, spec);
  REQUIRE(cells.size() == 8);
  CHECK(cells[0].sample_size == 100);
  CHECK(cells[0].strategy == Strategy::Greedy);
  CHECK(cells[0].temperature == 0.8);
  CHECK(cells[1].temperature == 1.2);
  CHECK(cells[2].strategy == Strategy::Random);
  CHECK(cells[4].sample_size == 200);
  const auto serial = run_grid_serial(human, lm, spec);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].metrics.accuracy == serial[i].metrics.accuracy);
    CHECK(cells[i].metrics.f1 == serial[i].metrics.f1);
  }
  spec.sample_sizes = {1000};
  CHECK_THROWS_AS(run_grid(human, lm, spec), Error);
}

TEST_CASE("grid validation") {
  GridSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.temperatures = {0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("recursion report: baseline row and serial equivalence") {
  const StubInfill infill;
  const StubSimilarity sim;
  const StubCoherence coh;
  const StubLoss loss;
  const ParaphraseScorers scorers{&infill, &sim, &coh, &loss};
  const std::vector<std::string> texts = {
      "the quick brown fox jumps over the lazy dog and then runs back home to rest a while .",
      "a small bird sat on the old fence and sang a song for the whole long morning ."};
  const DetectFn detect = [](const std::string& t) {
    return t.find("zed") == std::string::npos && t.find("elk") == std::string::npos;
  };
  const auto rows = recursion_report(texts, 2, scorers, ParaphraseConfig{}, detect);
  const auto serial = recursion_report_serial(texts, 2, scorers, ParaphraseConfig{}, detect);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].iteration == 0);
  CHECK(rows[0].detection_rate == 1.0);
  CHECK(rows[0].similarity == 1.0);
  CHECK(rows[1].detection_rate == 0.0);
  CHECK(rows[1].acceptability == doctest::Approx(0.95));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].detection_rate == serial[i].detection_rate);
    CHECK(rows[i].similarity == serial[i].similarity);
  }
}

TEST_CASE("scorer failures inside the parallel report propagate") {
  class Failing : public InfillScorer {
   public:
    std::vector<std::vector<std::string>> infill(std::span<const std::string>, std::size_t,
                                                 std::span<const std::vector<std::string>> = {}) const override {
      fail(ErrorKind::Network, "scorer unreachable");
    }
  };
  const Failing infill;
  const StubSimilarity sim;
  const StubCoherence coh;
  const StubLoss loss;
  const ParaphraseScorers scorers{&infill, &sim, &coh, &loss};
  const std::vector<std::string> texts(4, "the quick brown fox jumps over the lazy dog and then runs back home to rest .");
  try {
    recursion_report(texts, 1, scorers, ParaphraseConfig{}, {});
    FAIL("expected Network");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Network);
  }
}

TEST_CASE("CSV headers") {
  const auto dir = tmp("csv");
  std::filesystem::remove_all(dir);
  write_grid_csv(dir / "grid.csv", std::vector<GridCell>(1));
  CHECK(first_line(dir / "grid.csv") == "temperature,strategy,sample_size,accuracy,precision,recall,f1");
  write_qq_csv(dir / "qq.csv", DistributionReport{});
  CHECK(first_line(dir / "qq.csv") == "level,human,machine");
  write_density_csv(dir / "density.csv", DistributionReport{});
  CHECK(first_line(dir / "density.csv") == "bin_lo,bin_hi,human,machine");
  write_before_after_csv(dir / "ba.csv", BeforeAfter{});
  CHECK(first_line(dir / "ba.csv") == "phase,accuracy,precision,recall,f1");
  write_recursion_csv(dir / "rec.csv", std::vector<RecursionRow>(2));
  CHECK(first_line(dir / "rec.csv") == "iteration,detection_rate,acceptability,similarity");
  write_history_csv(dir / "hist.csv", std::vector<HistoryRow>(1));
  CHECK(first_line(dir / "hist.csv") == "iteration,mean_reward,best_reward,detector_f1,kl");
  std::filesystem::remove_all(dir);
}
