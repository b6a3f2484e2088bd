#include "evade/zero_shot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evade/compact_dist.hpp"
#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/rng.hpp"

namespace evade {

void PerturbationConfig::validate() const {
  require(n_perturbations >= 2, ErrorKind::InvalidArgument, "n_perturbations must be >= 2");
  require(mask_fraction > 0.0 && mask_fraction <= 0.5, ErrorKind::InvalidArgument, "mask_fraction must be in (0, 0.5]");
}

namespace {

struct PerturbPlan {
  std::vector<std::string> tokens;
  std::vector<TokenId> ids;
  std::vector<std::size_t> maskable;
  std::size_t n_mask = 0;
};

PerturbPlan plan_perturbation(std::string_view text, const PerturbationConfig& cfg, const NgramModel& lm) {
  cfg.validate();
  PerturbPlan plan;
  plan.tokens = tokenize(text);
  require(plan.tokens.size() >= 8, ErrorKind::TooShort, "zero-shot detection needs at least 8 tokens");
  plan.ids = lm.vocab().encode(plan.tokens);
  const auto protected_pos = protect_entities_in_text(text, cfg.gazetteer);
  for (std::size_t i = 0; i < plan.tokens.size(); ++i) {
    if (!std::binary_search(protected_pos.begin(), protected_pos.end(), i)) plan.maskable.push_back(i);
  }
  require(!plan.maskable.empty(), ErrorKind::InsufficientMaskable, "every token is protected");
  const auto budget = static_cast<std::size_t>(std::floor(cfg.mask_fraction * static_cast<double>(plan.tokens.size())));
  plan.n_mask = std::min(std::max<std::size_t>(1, budget), plan.maskable.size());
  return plan;
}

std::string one_perturbation(const PerturbPlan& plan, const NgramModel& lm, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> pool = plan.maskable;
  for (std::size_t k = 0; k < plan.n_mask; ++k) {
    std::swap(pool[k], pool[k + uniform_index(rng, pool.size() - k)]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(plan.n_mask));
  std::sort(chosen.begin(), chosen.end());

  std::vector<TokenId> ids = plan.ids;
  std::vector<std::string> tokens = plan.tokens;
  std::vector<TokenId> context;
  context.reserve(ids.size() + 1);
  for (std::size_t pos : chosen) {
    context.assign(1, Vocabulary::kBos);
    context.insert(context.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(pos));
    const TokenId masked[] = {Vocabulary::kUnk, Vocabulary::kBos, Vocabulary::kEos, ids[pos]};
    CompactDist d = CompactDist::build(lm, context, masked, nullptr, 1.0);
    d.truncate_nucleus(0.95);
    const TokenId fill = d.sample(uniform01(rng));
    ids[pos] = fill;
    tokens[pos] = lm.vocab().token(fill);
  }
  return detokenize(tokens);
}

}  // namespace

std::vector<std::string> perturb(std::string_view text, const PerturbationConfig& cfg, const NgramModel& lm) {
  const PerturbPlan plan = plan_perturbation(text, cfg, lm);
  std::vector<std::string> out(cfg.n_perturbations);
  const auto n = static_cast<std::ptrdiff_t>(cfg.n_perturbations);
  ExceptionSlot slot;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slot.run([&] { out[i] = one_perturbation(plan, lm, mix_seed(cfg.seed, static_cast<std::uint64_t>(i))); });
  }
  slot.rethrow();
  return out;
}

std::vector<std::string> perturb_serial(std::string_view text, const PerturbationConfig& cfg, const NgramModel& lm) {
  const PerturbPlan plan = plan_perturbation(text, cfg, lm);
  std::vector<std::string> out;
  out.reserve(cfg.n_perturbations);
  for (std::size_t i = 0; i < cfg.n_perturbations; ++i) out.push_back(one_perturbation(plan, lm, mix_seed(cfg.seed, i)));
  return out;
}

ZeroShotVerdict discrepancy_verdict(double original, std::span<const double> perturbed, double threshold) {
  require(perturbed.size() >= 2, ErrorKind::InvalidArgument, "need at least two perturbation scores");
  // Differences to the original keep an all-equal set at exactly zero.
  const auto n = static_cast<double>(perturbed.size());
  double mean = 0.0;
  for (double p : perturbed) mean += original - p;
  mean /= n;
  double ss = 0.0;
  for (double p : perturbed) ss += (original - p - mean) * (original - p - mean);
  const double sd = std::max(std::sqrt(ss / (n - 1.0)), 1e-6);
  ZeroShotVerdict v;
  v.discrepancy = mean;
  v.normalized_discrepancy = v.discrepancy / sd;
  v.label = v.normalized_discrepancy > threshold ? Label::Machine : Label::Human;
  return v;
}

ZeroShotVerdict detect_zero_shot(const LogProbFn& log_prob, std::string_view text,
                                 std::span<const std::string> perturbations, const PerturbationConfig& cfg) {
  const double original = log_prob(text);
  std::vector<double> scores;
  scores.reserve(perturbations.size());
  for (const auto& p : perturbations) scores.push_back(log_prob(p));
  return discrepancy_verdict(original, scores, cfg.threshold);
}

LogProbFn lm_log_prob(const NgramModel& lm, bool per_token_mean) {
  return [&lm, per_token_mean](std::string_view text) {
    const auto s = lm.score(text);
    if (!per_token_mean) return s.log_prob;
    return s.tokens > 0 ? s.log_prob / static_cast<double>(s.tokens) : 0.0;
  };
}

ZeroShotVerdict detect_zero_shot(const NgramModel& lm, std::string_view text, const PerturbationConfig& cfg) {
  const auto perturbations = perturb(text, cfg, lm);
  return detect_zero_shot(lm_log_prob(lm, cfg.per_token_mean), text, perturbations, cfg);
}

namespace {

void check_labels(std::span<const double> scores, std::span<const Label> labels) {
  require(scores.size() == labels.size(), ErrorKind::InvalidArgument, "scores and labels differ in length");
  const bool has_h = std::find(labels.begin(), labels.end(), Label::Human) != labels.end();
  const bool has_m = std::find(labels.begin(), labels.end(), Label::Machine) != labels.end();
  require(has_h && has_m, ErrorKind::MissingClass, "both labels must be present");
}

}  // namespace

double balanced_accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_labels(scores, labels);
  double tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool machine = scores[i] > threshold;
    if (labels[i] == Label::Machine) {
      ++pos;
      tp += machine ? 1 : 0;
    } else if (labels[i] == Label::Human) {
      ++neg;
      tn += machine ? 0 : 1;
    }
  }
  return 0.5 * (tp / pos + tn / neg);
}

double calibrate_threshold(std::span<const double> scores, std::span<const Label> labels) {
  check_labels(scores, labels);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.back());
  double best_t = candidates.front();
  double best = -1.0;
  for (double t : candidates) {
    const double ba = balanced_accuracy(scores, labels, t);
    if (ba > best) {
      best = ba;
      best_t = t;
    }
  }
  return best_t;
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  check_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with midranks.
  double rank_sum = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::Machine) rank_sum += midrank;
    }
    i = j;
  }
  for (Label l : labels) {
    if (l == Label::Machine) ++pos;
    else if (l == Label::Human) ++neg;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

}  // namespace evade
