#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evade/corpus.hpp"
#include "evade/entities.hpp"
#include "evade/ngram.hpp"

namespace evade {

struct PerturbationConfig {
  std::size_t n_perturbations = 20;
  double mask_fraction = 0.15;
  std::uint64_t seed = 0;
  /// Decision threshold on the normalized discrepancy.
  double threshold = 0.0;
  /// Score by mean per-token log probability instead of the total.
  bool per_token_mean = false;
  Gazetteer gazetteer;

  void validate() const;
};

struct ZeroShotVerdict {
  double discrepancy = 0.0;
  double normalized_discrepancy = 0.0;
  Label label = Label::Human;
};

/// Log probability of a whole text under some scoring model.
using LogProbFn = std::function<double(std::string_view)>;

/// Rewritten copies of `text`, each with max(1, floor(mask_fraction * n))
/// unprotected tokens replaced by draws from `lm` (temperature 1, nucleus
/// 0.95, never the original token). Perturbation i uses seed
/// mix_seed(cfg.seed, i).
std::vector<std::string> perturb(std::string_view text, const PerturbationConfig& cfg, const NgramModel& lm);
std::vector<std::string> perturb_serial(std::string_view text, const PerturbationConfig& cfg, const NgramModel& lm);

ZeroShotVerdict discrepancy_verdict(double original, std::span<const double> perturbed, double threshold);

/// Verdict for `text` against explicit perturbations.
ZeroShotVerdict detect_zero_shot(const LogProbFn& log_prob, std::string_view text,
                                 std::span<const std::string> perturbations, const PerturbationConfig& cfg);

ZeroShotVerdict detect_zero_shot(const NgramModel& lm, std::string_view text, const PerturbationConfig& cfg);

/// Scoring function used by detect_zero_shot for `lm` under `cfg`.
LogProbFn lm_log_prob(const NgramModel& lm, bool per_token_mean);

/// Threshold maximizing balanced accuracy (machine iff score > threshold).
/// Candidates are midpoints between consecutive distinct scores and the
/// largest score; ties go to the lower threshold.
double calibrate_threshold(std::span<const double> scores, std::span<const Label> labels);

double balanced_accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold);

/// Area under the ROC curve with machine as the positive class (ties count 1/2).
double auroc(std::span<const double> scores, std::span<const Label> labels);

}  // namespace evade
