#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/scorers.hpp"

namespace evade {

struct RewardConfig {
  double special_char_threshold = 0.25;
  int repetition_start = 3;
  int repetition_max = 8;
  double acceptability_threshold = 0.4;
  double dictionary_threshold = 0.25;
  double emoji_ratio_threshold = 0.5;
  int emoji_count_threshold = 4;
  double emoji_count_step = 0.25;
  double query_overlap_threshold = 0.5;
  int special_token_allowance = 2;
  double special_token_step = 0.4;
  double batch_start_low = 0.10;
  double batch_start_high = 0.20;
  double unknown_char_base = 0.5;
  double unknown_char_step = 0.1;
  double evasion_scale = 1.0;
  /// Use clamped detector log-odds instead of 2 * P(human) - 1.
  bool raw_logit = false;
  std::vector<std::string> special_token_markers = {"<|startoftext|>", "<|endoftext|>", "⟨bos⟩", "⟨eos⟩"};
  /// Extra code points counted as unknown/filler besides U+FFFD.
  std::u32string unknown_chars;

  void validate() const;
};

struct RewardBreakdown {
  double special_chars = 0.0;
  double repetition = 0.0;
  double acceptability = 0.0;
  double dictionary = 0.0;
  double emoji_ratio = 0.0;
  double emoji_count = 0.0;
  double query_repetition = 0.0;
  double special_tokens = 0.0;
  double same_start = 0.0;
  double number_start = 0.0;
  double unknown_chars = 0.0;
  double detector = 0.0;
  double combined = 0.0;

  std::vector<double> penalties() const;
  bool violates() const;
  nlohmann::ordered_json to_json() const;
};

double penalty_special_chars(std::string_view text, const RewardConfig& cfg = {});
double penalty_repetition(std::string_view text, const RewardConfig& cfg = {});
double penalty_acceptability(double score, const RewardConfig& cfg = {});
double penalty_dictionary(std::string_view text, const std::unordered_set<std::string>& dictionary,
                          const RewardConfig& cfg = {});
double penalty_emoji_ratio(std::string_view text, const RewardConfig& cfg = {});
double penalty_emoji_count(std::string_view text, const RewardConfig& cfg = {});
double penalty_query_repetition(std::string_view query, std::string_view response, const RewardConfig& cfg = {});
double penalty_special_tokens(std::string_view text, const RewardConfig& cfg = {});
std::vector<double> penalty_batch_same_start(std::span<const std::string> batch, const RewardConfig& cfg = {});
std::vector<double> penalty_batch_number_start(std::span<const std::string> batch, const RewardConfig& cfg = {});
double penalty_unknown_chars(std::string_view text, const RewardConfig& cfg = {});

/// Detector reward from P(human): 2p - 1, or clamped log-odds in raw mode.
double detector_reward(double p_human, const RewardConfig& cfg = {});

/// Fills `detector` and `combined` from the penalty fields of `b`.
RewardBreakdown combine(double detector_score, RewardBreakdown b, const RewardConfig& cfg = {});

/// Scores rollout batches: every per-text rule, the two batch rules over the
/// whole batch, the detector, and the combination law.
class RewardEngine {
 public:
  RewardEngine(RewardConfig cfg, std::shared_ptr<const DetectorScorer> detector,
               std::shared_ptr<const CoherenceScorer> coherence, std::unordered_set<std::string> dictionary);

  std::vector<RewardBreakdown> score_batch(std::span<const std::string> queries,
                                           std::span<const std::string> responses) const;
  RewardBreakdown score(std::string_view query, std::string_view response) const;

  /// Per-text rules only (no batch rules, detector or combination).
  RewardBreakdown penalties(std::string_view query, std::string_view response, double coherence) const;

  const RewardConfig& config() const noexcept { return cfg_; }
  const DetectorScorer& detector() const noexcept { return *detector_; }

 private:
  RewardConfig cfg_;
  std::shared_ptr<const DetectorScorer> detector_;
  std::shared_ptr<const CoherenceScorer> coherence_;
  std::unordered_set<std::string> dictionary_;
};

/// Case-folded word set of a corpus, for the dictionary rule.
std::unordered_set<std::string> build_dictionary(std::span<const Document> docs);

}  // namespace evade
