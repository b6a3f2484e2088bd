#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/decoding.hpp"
#include "evade/entities.hpp"
#include "evade/ngram.hpp"
#include "evade/scorers.hpp"

namespace evade {

/// One way of masking a sentence: a set of disjoint position pairs.
struct MaskPlan {
  std::vector<std::string> tokens;
  std::vector<std::size_t> protected_positions;
  std::vector<std::array<std::size_t, 2>> groups;
  double masked_fraction = 0.0;

  /// Masked positions, ascending.
  std::vector<std::size_t> positions() const;
  /// Detokenized sentence with ⟨mask⟩ at every masked position.
  std::string masked_text() const;
};

struct ParaphraseCandidate {
  std::string text;
  double similarity = 0.0;
  double coherence = 0.0;
  double log_loss = 0.0;
  std::size_t plan = 0;
};

struct TrainPair {
  std::string source;
  std::string target;
  double log_loss = 0.0;
  double similarity = 0.0;
  double coherence_src = 0.0;
  double coherence_tgt = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct ParaphraseConfig {
  double mask_budget = 0.15;
  /// Mask plans drawn per sentence.
  std::size_t mask_samples = 10;
  /// Infill candidates requested per plan.
  std::size_t fills_per_plan = 10;
  double similarity_threshold = 0.9;
  double coherence_threshold = 0.9;
  double coherence_delta = 0.05;
  std::uint64_t seed = 0;
  Gazetteer gazetteer;

  void validate() const;
};

/// Scorers used by the pipeline; all must outlive the calls that use them.
struct ParaphraseScorers {
  const InfillScorer* infill = nullptr;
  const SimilarityScorer* similarity = nullptr;
  const CoherenceScorer* coherence = nullptr;
  const LogLossScorer* log_loss = nullptr;

  void validate() const;
};

/// Every pair of unprotected positions whose share of the sentence stays
/// within `budget`. Throws InsufficientMaskable when none qualifies.
std::vector<MaskPlan> enumerate_masks(std::span<const std::string> tokens,
                                      std::span<const std::size_t> protected_positions, double budget = 0.15);

/// min(n, plans) plans drawn without replacement.
std::vector<MaskPlan> sample_mask_combos(std::span<const MaskPlan> plans, std::size_t n, std::uint64_t seed);

/// Unique candidates for `plan` that keep every unmasked token verbatim and
/// differ from the original sentence.
std::vector<std::string> fill_masks(const MaskPlan& plan, const InfillScorer& infill, std::size_t n_fill);

/// Filter rule for one candidate given its similarity to the original and
/// both coherence scores.
bool passes_filter(double similarity, double coherence_original, double coherence_candidate,
                   const ParaphraseConfig& cfg = {});

/// Candidates that pass the similarity and coherence rules, scored.
std::vector<ParaphraseCandidate> filter_candidates(const std::string& original, std::span<const std::string> candidates,
                                                   const SimilarityScorer& similarity,
                                                   const CoherenceScorer& coherence,
                                                   const ParaphraseConfig& cfg = {});

/// Highest log loss, ties to the lexicographically smallest text. Uses the
/// log_loss values already stored in the candidates.
ParaphraseCandidate select_best(std::span<const ParaphraseCandidate> survivors);
ParaphraseCandidate select_best(std::vector<ParaphraseCandidate> survivors, const LogLossScorer& log_loss);

/// Best paraphrase of one sentence. Throws InsufficientMaskable or NoSurvivors.
ParaphraseCandidate paraphrase_sentence(const std::string& sentence, const ParaphraseScorers& scorers,
                                        const ParaphraseConfig& cfg, std::uint64_t seed);

/// Sentence-by-sentence paraphrase; sentences without a survivor are kept.
std::string paraphrase_text(const std::string& text, const ParaphraseScorers& scorers, const ParaphraseConfig& cfg);

struct TrajectoryStep {
  std::size_t iteration = 0;
  std::string text;
  double similarity = 1.0;  // to the original text
  double coherence = 0.0;
  bool detected = false;
};

using DetectFn = std::function<bool(const std::string&)>;

/// Step 0 is the input itself; step i paraphrases step i-1 with seed
/// mix_seed(cfg.seed, i).
std::vector<TrajectoryStep> recursive_paraphrase(const std::string& text, std::size_t iterations,
                                                 const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                                 const DetectFn& detect = {});

/// Generates an answer per question and pairs every sentence with its best
/// paraphrase. Items that fail are skipped.
std::vector<TrainPair> build_trainset(std::span<const std::string> questions, const NgramModel& lm,
                                      const GenerationConfig& generation, const ParaphraseScorers& scorers,
                                      const ParaphraseConfig& cfg);
std::vector<TrainPair> build_trainset_serial(std::span<const std::string> questions, const NgramModel& lm,
                                             const GenerationConfig& generation, const ParaphraseScorers& scorers,
                                             const ParaphraseConfig& cfg);

}  // namespace evade
