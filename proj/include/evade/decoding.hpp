#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evade/ngram.hpp"
#include "evade/rng.hpp"

namespace evade {

/// Probability vector aligned to vocabulary indices.
using TokenDistribution = std::vector<double>;

enum class Strategy { Greedy, Random, TopK, Nucleus, Typical };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct GenerationConfig {
  Strategy strategy = Strategy::Random;
  double temperature = 1.0;
  std::size_t top_k = 100;
  double top_p = 0.95;
  double typical_mass = 0.95;
  std::size_t max_tokens = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Throws InvalidArgument unless entries are non-negative and sum to 1 ± 1e-9.
void check_distribution(std::span<const double> d);

TokenDistribution apply_temperature(std::span<const double> d, double tau);
TokenDistribution truncate_top_k(std::span<const double> d, std::size_t k);
TokenDistribution truncate_nucleus(std::span<const double> d, double p);
TokenDistribution truncate_typical(std::span<const double> d, double mass);

/// Strategy-specific truncation; greedy and random return the input.
TokenDistribution truncate(std::span<const double> d, const GenerationConfig& cfg);

/// Highest-probability index, lowest index on ties.
std::size_t argmax(std::span<const double> d);

/// Inverse-CDF draw walking tokens in descending probability (ties by index).
std::size_t sample_index(std::span<const double> d, double u);

/// Additive log-space bias over the vocabulary ids
/// [Vocabulary::kReserved, Vocabulary::kReserved + bias.size()), plus an
/// offset added to the sampling temperature.
struct LogitBias {
  std::vector<double> bias;
  double temperature_offset = 0.0;

  bool is_identity() const noexcept;
};

/// Effective temperature after the bias offset, clamped to [0.05, 2].
double effective_temperature(double tau, const LogitBias* bias);

/// Generated continuation of `prompt` (detokenized, prompt excluded).
std::string generate(const NgramModel& model, std::string_view prompt, const GenerationConfig& cfg,
                     const LogitBias* bias = nullptr);

/// Continuation token ids; `rng` supplies one uniform per sampled step.
std::vector<TokenId> generate_ids(const NgramModel& model, std::span<const TokenId> prompt, const GenerationConfig& cfg,
                                  const LogitBias* bias, Rng& rng);

/// Same contract as generate_ids, computed on dense distributions with the
/// public truncation functions. Slow; kept as the test oracle.
std::vector<TokenId> generate_ids_dense(const NgramModel& model, std::span<const TokenId> prompt,
                                        const GenerationConfig& cfg, const LogitBias* bias, Rng& rng);

/// One generation per prompt; prompt i uses seed mix_seed(cfg.seed, i).
std::vector<std::string> generate_batch(const NgramModel& model, std::span<const std::string> prompts,
                                        const GenerationConfig& cfg, const LogitBias* bias = nullptr);
std::vector<std::string> generate_batch_serial(const NgramModel& model, std::span<const std::string> prompts,
                                               const GenerationConfig& cfg, const LogitBias* bias = nullptr);

}  // namespace evade
