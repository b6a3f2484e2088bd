#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evade/decoding.hpp"
#include "evade/naive_bayes.hpp"
#include "evade/ngram.hpp"
#include "evade/reward.hpp"

namespace evade {

/// Additive log-space bias over the `token_bias.size()` most frequent
/// non-reserved tokens plus a temperature offset, on top of a base model.
struct GeneratorParams {
  std::vector<double> token_bias;
  double temperature_offset = 0.0;

  LogitBias as_bias() const;
  /// Euclidean norm over the bias entries and the temperature offset.
  double norm() const;
  /// Clamps every entry to [-cap, cap].
  void clamp(double cap);
};

struct LoopConfig {
  std::size_t iterations = 200;
  std::size_t population_size = 32;
  double elite_fraction = 0.25;
  std::size_t batch_size = 64;
  double kl_weight = 0.0;
  std::uint64_t seed = 0;
  std::size_t bias_size = 512;
  double bias_cap = 3.0;
  /// Initial proposal scales for bias entries and the temperature offset.
  double bias_scale = 0.5;
  double temperature_scale = 0.3;
  double scale_decay = 0.95;
  std::size_t plateau_window = 5;
  double plateau_tolerance = 1e-4;
  /// Probe contexts for the divergence term.
  std::size_t probe_count = 32;

  void validate() const;
};

/// Everything the loop needs besides the optimizer settings.
struct AdaptSetup {
  const NgramModel* model = nullptr;
  const RewardEngine* engine = nullptr;
  GenerationConfig generation;
  /// Prompt pool; an empty string asks for free generation.
  std::vector<std::string> prompts;
  /// Human texts used with fresh rollouts to track detector F1.
  std::vector<std::string> human_eval;
  std::size_t eval_rollouts = 200;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double mean_reward = 0.0;  // mean reward of the current mean parameters
  double best_reward = 0.0;  // best fitness seen so far (non-decreasing)
  double detector_f1 = 0.0;  // detector F1 on rollouts of the current mean
  double kl = 0.0;           // divergence of the current mean
};

struct AdaptResult {
  GeneratorParams params;
  std::vector<HistoryRow> history;
  double best_fitness = 0.0;
};

/// One continuation per prompt on the biased model.
std::vector<std::string> rollout(const NgramModel& model, const GeneratorParams& params,
                                 std::span<const std::string> prompts, const GenerationConfig& cfg);

/// Rewards per text; batch rules see the whole rollout.
std::vector<RewardBreakdown> evaluate(std::span<const std::string> texts, std::span<const std::string> prompts,
                                      const RewardEngine& engine);

/// Mean KL(biased || base) over next-token distributions at the probes.
/// Both sides use `base_temperature`; the biased side adds the offset.
double divergence(const NgramModel& model, const GeneratorParams& params,
                  std::span<const std::vector<TokenId>> probe_contexts, double base_temperature);

/// Contexts seen during training, drawn deterministically from `prompts`.
std::vector<std::vector<TokenId>> probe_contexts(const NgramModel& model, std::span<const std::string> prompts,
                                                 std::size_t count, std::uint64_t seed);

/// Detector metrics over machine rollouts and human texts (machine positive,
/// label machine iff P(machine) >= 0.5).
Metrics detector_metrics(const DetectorScorer& detector, std::span<const std::string> machine,
                         std::span<const std::string> human);

struct MemberScore {
  double fitness = 0.0;
  double mean_reward = 0.0;
  double kl = 0.0;
};

/// Fitness of each candidate under shared prompts and generation seed.
std::vector<MemberScore> evaluate_population(const AdaptSetup& setup, std::span<const GeneratorParams> members,
                                             std::span<const std::string> prompts,
                                             std::span<const std::vector<TokenId>> probes, double kl_weight);
std::vector<MemberScore> evaluate_population_serial(const AdaptSetup& setup,
                                                    std::span<const GeneratorParams> members,
                                                    std::span<const std::string> prompts,
                                                    std::span<const std::vector<TokenId>> probes, double kl_weight);

/// Cross-entropy-method search. Returns the best-scoring mean parameters seen.
AdaptResult adapt(const AdaptSetup& setup, const LoopConfig& cfg);

/// Number of texts violating at least one rule.
std::size_t count_violations(std::span<const RewardBreakdown> rewards);

}  // namespace evade
