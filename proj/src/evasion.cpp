#include "evade/evasion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evade/compact_dist.hpp"
#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/rng.hpp"

namespace evade {

namespace {

constexpr TokenId kMasked[] = {Vocabulary::kUnk, Vocabulary::kBos};

}  // namespace

LogitBias GeneratorParams::as_bias() const { return LogitBias{token_bias, temperature_offset}; }

double GeneratorParams::norm() const {
  double ss = temperature_offset * temperature_offset;
  for (double b : token_bias) ss += b * b;
  return std::sqrt(ss);
}

void GeneratorParams::clamp(double cap) {
  for (double& b : token_bias) b = std::clamp(b, -cap, cap);
}

void LoopConfig::validate() const {
  require(iterations >= 1, ErrorKind::Config, "iterations must be >= 1");
  require(population_size >= 2, ErrorKind::Config, "population_size must be >= 2");
  require(elite_fraction > 0.0 && elite_fraction <= 0.5, ErrorKind::Config, "elite_fraction must be in (0, 0.5]");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(kl_weight >= 0.0, ErrorKind::Config, "kl_weight must be >= 0");
  require(bias_cap > 0.0, ErrorKind::Config, "bias_cap must be > 0");
  require(bias_scale >= 0.0 && temperature_scale >= 0.0, ErrorKind::Config, "proposal scales must be >= 0");
  require(scale_decay > 0.0 && scale_decay <= 1.0, ErrorKind::Config, "scale_decay must be in (0, 1]");
  require(plateau_window >= 1, ErrorKind::Config, "plateau_window must be >= 1");
  require(probe_count >= 1, ErrorKind::Config, "probe_count must be >= 1");
}

std::vector<std::string> rollout(const NgramModel& model, const GeneratorParams& params,
                                 std::span<const std::string> prompts, const GenerationConfig& cfg) {
  const LogitBias bias = params.as_bias();
  return generate_batch(model, prompts, cfg, bias.is_identity() ? nullptr : &bias);
}

std::vector<RewardBreakdown> evaluate(std::span<const std::string> texts, std::span<const std::string> prompts,
                                      const RewardEngine& engine) {
  require(texts.size() == prompts.size(), ErrorKind::InvalidArgument, "texts and prompts differ in length");
  if (texts.empty()) return {};
  return engine.score_batch(prompts, texts);
}

double divergence(const NgramModel& model, const GeneratorParams& params,
                  std::span<const std::vector<TokenId>> probe_contexts, double base_temperature) {
  require(!probe_contexts.empty(), ErrorKind::InvalidArgument, "divergence needs probe contexts");
  const LogitBias biased = params.as_bias();
  const LogitBias base{std::vector<double>(params.token_bias.size(), 0.0), 0.0};
  const double tau = effective_temperature(base_temperature, &biased);
  double sum = 0.0;
  for (const auto& ctx : probe_contexts) {
    const auto p = CompactDist::build(model, ctx, kMasked, &biased, tau);
    const auto q = CompactDist::build(model, ctx, kMasked, &base, base_temperature);
    sum += compact_kl(p, q);
  }
  return sum / static_cast<double>(probe_contexts.size());
}

std::vector<std::vector<TokenId>> probe_contexts(const NgramModel& model, std::span<const std::string> prompts,
                                                 std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<TokenId>> out;
  out.push_back({Vocabulary::kBos});
  if (prompts.empty()) return out;
  Rng rng(seed);
  const auto keep = static_cast<std::size_t>(std::max(1, model.order() - 1));
  while (out.size() < count) {
    const auto ids = model.encode(prompts[uniform_index(rng, prompts.size())]);
    const std::size_t cut = uniform_index(rng, ids.size() + 1);
    std::vector<TokenId> ctx{Vocabulary::kBos};
    ctx.insert(ctx.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut));
    if (ctx.size() > keep) ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(keep));
    out.push_back(std::move(ctx));
  }
  return out;
}

Metrics detector_metrics(const DetectorScorer& detector, std::span<const std::string> machine,
                         std::span<const std::string> human) {
  std::vector<std::string> texts;
  std::vector<Label> truth;
  for (const auto& m : machine) {
    texts.push_back(m.empty() ? std::string(".") : m);
    truth.push_back(Label::Machine);
  }
  for (const auto& h : human) {
    texts.push_back(h);
    truth.push_back(Label::Human);
  }
  std::vector<Label> predicted;
  for (double p : detector.p_machine(texts)) predicted.push_back(p >= 0.5 ? Label::Machine : Label::Human);
  return compute_metrics(truth, predicted);
}

std::size_t count_violations(std::span<const RewardBreakdown> rewards) {
  return static_cast<std::size_t>(
      std::count_if(rewards.begin(), rewards.end(), [](const RewardBreakdown& r) { return r.violates(); }));
}

namespace {

MemberScore score_member(const AdaptSetup& setup, const GeneratorParams& params,
                         std::span<const std::string> prompts, std::span<const std::vector<TokenId>> probes,
                         double kl_weight) {
  const auto texts = rollout(*setup.model, params, prompts, setup.generation);
  const auto rewards = evaluate(texts, prompts, *setup.engine);
  MemberScore s;
  for (const auto& r : rewards) s.mean_reward += r.combined;
  if (!rewards.empty()) s.mean_reward /= static_cast<double>(rewards.size());
  s.kl = divergence(*setup.model, params, probes, setup.generation.temperature);
  s.fitness = s.mean_reward - kl_weight * s.kl;
  return s;
}

}  // namespace

std::vector<MemberScore> evaluate_population(const AdaptSetup& setup, std::span<const GeneratorParams> members,
                                             std::span<const std::string> prompts,
                                             std::span<const std::vector<TokenId>> probes, double kl_weight) {
  std::vector<MemberScore> out(members.size());
  const auto n = static_cast<std::ptrdiff_t>(members.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    slot.run([&] { out[k] = score_member(setup, members[k], prompts, probes, kl_weight); });
  }
  slot.rethrow();
  return out;
}

std::vector<MemberScore> evaluate_population_serial(const AdaptSetup& setup,
                                                    std::span<const GeneratorParams> members,
                                                    std::span<const std::string> prompts,
                                                    std::span<const std::vector<TokenId>> probes, double kl_weight) {
  std::vector<MemberScore> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(score_member(setup, m, prompts, probes, kl_weight));
  return out;
}

namespace {

std::vector<std::string> draw_prompts(std::span<const std::string> pool, std::size_t n, std::uint64_t seed) {
  std::vector<std::string> out;
  if (pool.empty()) return std::vector<std::string>(n, std::string());
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[uniform_index(rng, pool.size())]);
  return out;
}

}  // namespace

AdaptResult adapt(const AdaptSetup& setup, const LoopConfig& cfg) {
  cfg.validate();
  setup.generation.validate();
  require(setup.model != nullptr && setup.engine != nullptr, ErrorKind::InvalidArgument,
          "adapt needs a model and a reward engine");
  const NgramModel& model = *setup.model;
  const std::size_t dim = std::min(cfg.bias_size, model.vocab_size() - Vocabulary::kReserved);
  const double tau = setup.generation.temperature;
  // Keep the effective temperature inside (0, 2].
  const double offset_lo = 0.05 - tau;
  const double offset_hi = 2.0 - tau;

  const auto fit_prompts = draw_prompts(setup.prompts, cfg.batch_size, mix_seed(cfg.seed, 1));
  const auto eval_prompts = draw_prompts(setup.prompts, setup.eval_rollouts, mix_seed(cfg.seed, 3));
  const auto probes = probe_contexts(model, setup.prompts, cfg.probe_count, mix_seed(cfg.seed, 5));
  AdaptSetup fit_setup = setup;
  fit_setup.generation.seed = mix_seed(cfg.seed, 2);
  GenerationConfig eval_gen = setup.generation;
  eval_gen.seed = mix_seed(cfg.seed, 4);

  GeneratorParams mean{std::vector<double>(dim, 0.0), 0.0};
  double bias_sigma = cfg.bias_scale;
  double tau_sigma = cfg.temperature_scale;
  const std::size_t n_elite =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.elite_fraction * cfg.population_size)));

  AdaptResult result;
  result.params = mean;
  result.best_fitness = -INFINITY;
  std::vector<double> elite_trace;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<GeneratorParams> members(cfg.population_size, mean);
    for (std::size_t k = 1; k < members.size(); ++k) {
      Rng rng(mix_seed(mix_seed(cfg.seed, 100 + it), k));
      for (double& b : members[k].token_bias) b += bias_sigma * standard_normal(rng);
      members[k].temperature_offset += tau_sigma * standard_normal(rng);
      members[k].clamp(cfg.bias_cap);
      members[k].temperature_offset = std::clamp(members[k].temperature_offset, offset_lo, offset_hi);
    }
    const auto scores = evaluate_population(fit_setup, members, fit_prompts, probes, cfg.kl_weight);

    // Only the current mean competes for the returned parameters; single
    // perturbed members are too noisy an estimate.
    if (scores[0].fitness > result.best_fitness) {
      result.best_fitness = scores[0].fitness;
      result.params = members[0];
    }

    HistoryRow row;
    row.iteration = it;
    row.mean_reward = scores[0].mean_reward;
    row.best_reward = result.best_fitness;
    row.kl = scores[0].kl;
    if (!setup.human_eval.empty() && !eval_prompts.empty()) {
      const auto texts = rollout(model, mean, eval_prompts, eval_gen);
      row.detector_f1 = detector_metrics(setup.engine->detector(), texts, setup.human_eval).f1;
    }
    result.history.push_back(row);

    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a].fitness > scores[b].fitness; });
    GeneratorParams next{std::vector<double>(dim, 0.0), 0.0};
    for (std::size_t e = 0; e < n_elite; ++e) {
      const auto& m = members[order[e]];
      for (std::size_t j = 0; j < dim; ++j) next.token_bias[j] += m.token_bias[j];
      next.temperature_offset += m.temperature_offset;
    }
    double elite_fitness = 0.0;
    for (std::size_t e = 0; e < n_elite; ++e) elite_fitness += scores[order[e]].fitness;
    elite_trace.push_back(elite_fitness / static_cast<double>(n_elite));
    for (double& b : next.token_bias) b /= static_cast<double>(n_elite);
    next.temperature_offset /= static_cast<double>(n_elite);
    mean = std::move(next);
    bias_sigma *= cfg.scale_decay;
    tau_sigma *= cfg.scale_decay;

    if (elite_trace.size() > cfg.plateau_window &&
        std::abs(elite_trace.back() - elite_trace[elite_trace.size() - 1 - cfg.plateau_window]) <
            cfg.plateau_tolerance) {
      break;
    }
  }
  return result;
}

}  // namespace evade
