#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evade/decoding.hpp"
#include "evade/evasion.hpp"
#include "evade/naive_bayes.hpp"
#include "evade/ngram.hpp"
#include "evade/paraphrase.hpp"
#include "evade/zero_shot.hpp"

namespace evade {

/// Generator-training, detector-training and evaluation documents.
struct DataSplit {
  std::vector<Document> generator;
  std::vector<Document> detector;
  std::vector<Document> evaluation;
};

/// Shuffles with `seed` and cuts by the two leading fractions; the rest is
/// the evaluation part. Throws unless the three id sets are disjoint.
DataSplit split_corpus(std::span<const Document> docs, double generator_fraction, double detector_fraction,
                       std::uint64_t seed);

/// Throws InvalidArgument if any id appears in two parts.
void check_disjoint(const DataSplit& split);

struct GridSpec {
  std::vector<double> temperatures = {0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
  std::vector<Strategy> strategies = {Strategy::Greedy, Strategy::Random, Strategy::TopK, Strategy::Nucleus,
                                      Strategy::Typical};
  std::vector<std::size_t> sample_sizes = {1000, 10000};
  std::size_t replications = 3;
  std::uint64_t seed = 0;
  /// top_k, top_p, typical_mass and max_tokens come from here.
  GenerationConfig generation;
  double nb_alpha = 1.0;

  void validate() const;
};

struct GridCell {
  double temperature = 1.0;
  Strategy strategy = Strategy::Random;
  std::size_t sample_size = 0;
  Metrics metrics;  // rates averaged over replications
};

/// Per cell and replication: `sample_size` free generations against as many
/// human documents, Naive Bayes trained on one half of each and scored on
/// the other.
std::vector<GridCell> run_grid(std::span<const Document> human, const NgramModel& lm, const GridSpec& spec);
std::vector<GridCell> run_grid_serial(std::span<const Document> human, const NgramModel& lm, const GridSpec& spec);

struct QuantilePair {
  double level = 0.0;
  double human = 0.0;    // ln word probability
  double machine = 0.0;
};

struct DensityBin {
  double lo = 0.0;
  double hi = 0.0;
  double human = 0.0;    // share of tokens in the bin
  double machine = 0.0;
};

struct DistributionReport {
  std::vector<QuantilePair> quantiles;
  std::vector<DensityBin> density;
  /// Mean absolute difference between paired log quantiles.
  double gap = 0.0;
};

/// Compares the per-token log word probabilities (relative frequency within
/// each corpus) on equal-size token samples.
DistributionReport distribution_report(std::span<const Document> human, std::span<const Document> machine,
                                       std::size_t quantiles = 100, std::size_t bins = 30);

struct BeforeAfter {
  Metrics before;
  Metrics after;
  bool passed() const { return after.f1 < before.f1; }
};

/// Detector metrics on fresh rollouts of the base and adapted generators
/// (same prompts and seed) against the same human texts.
BeforeAfter before_after_report(const DetectorScorer& detector, const NgramModel& model, const GeneratorParams& adapted,
                                std::span<const std::string> prompts, std::span<const std::string> human,
                                const GenerationConfig& generation);

struct RecursionRow {
  std::size_t iteration = 0;
  double detection_rate = 0.0;
  double acceptability = 0.0;
  double similarity = 0.0;
};

/// Averages recursive_paraphrase trajectories over `texts`; row 0 is the
/// unparaphrased baseline. Text i uses seed mix_seed(cfg.seed, i).
std::vector<RecursionRow> recursion_report(std::span<const std::string> texts, std::size_t iterations,
                                           const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                           const DetectFn& detect);
std::vector<RecursionRow> recursion_report_serial(std::span<const std::string> texts, std::size_t iterations,
                                                  const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                                  const DetectFn& detect);

struct ZeroShotCalibration {
  double threshold = 0.0;
  double auroc = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t used = 0;  // texts long enough to perturb
};

/// Threshold on the normalized discrepancy fitted on labeled texts. Texts
/// too short to perturb are skipped.
ZeroShotCalibration calibrate_zero_shot(const NgramModel& lm, std::span<const std::string> human,
                                        std::span<const std::string> machine, const PerturbationConfig& cfg);

// CSV writers; headers are fixed.
void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells);
void write_qq_csv(const std::filesystem::path& path, const DistributionReport& report);
void write_density_csv(const std::filesystem::path& path, const DistributionReport& report);
void write_before_after_csv(const std::filesystem::path& path, const BeforeAfter& report);
void write_recursion_csv(const std::filesystem::path& path, std::span<const RecursionRow> rows);
void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows);

}  // namespace evade
