#include "evade/paraphrase.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/rng.hpp"
#include "evade/text.hpp"

namespace evade {

namespace {

constexpr double kMaxMaskFraction = 0.15;
constexpr std::size_t kMaxFillTokens = 3;

}  // namespace

std::vector<std::size_t> MaskPlan::positions() const {
  std::vector<std::size_t> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string MaskPlan::masked_text() const {
  std::vector<std::string> toks = tokens;
  for (std::size_t p : positions()) toks[p] = std::string(kMaskToken);
  return detokenize(toks);
}

nlohmann::ordered_json TrainPair::to_json() const {
  nlohmann::ordered_json j;
  j["source"] = source;
  j["target"] = target;
  j["log_loss"] = log_loss;
  j["similarity"] = similarity;
  j["coherence_src"] = coherence_src;
  j["coherence_tgt"] = coherence_tgt;
  return j;
}

void ParaphraseConfig::validate() const {
  require(mask_budget > 0.0 && mask_budget <= kMaxMaskFraction, ErrorKind::Config, "mask_budget must be in (0, 0.15]");
  require(mask_samples >= 1 && fills_per_plan >= 1, ErrorKind::Config, "mask_samples and fills_per_plan must be >= 1");
  require(similarity_threshold >= -1.0 && similarity_threshold <= 1.0, ErrorKind::Config,
          "similarity_threshold must be in [-1, 1]");
  require(coherence_threshold >= 0.0 && coherence_threshold <= 1.0 && coherence_delta >= 0.0, ErrorKind::Config,
          "coherence settings out of range");
}

void ParaphraseScorers::validate() const {
  require(infill && similarity && coherence && log_loss, ErrorKind::InvalidArgument,
          "paraphrasing needs infill, similarity, coherence and log-loss scorers");
}

std::vector<MaskPlan> enumerate_masks(std::span<const std::string> tokens,
                                      std::span<const std::size_t> protected_positions, double budget) {
  std::vector<char> locked(tokens.size(), 0);
  for (std::size_t p : protected_positions) {
    if (p < tokens.size()) locked[p] = 1;
  }
  if (!tokens.empty()) locked.back() = 1;
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!locked[i]) maskable.push_back(i);
  }
  require(maskable.size() >= 2, ErrorKind::InsufficientMaskable,
          "need at least two maskable tokens, found " + std::to_string(maskable.size()));
  const double fraction = 2.0 / static_cast<double>(tokens.size());
  require(fraction <= budget + 1e-12, ErrorKind::InsufficientMaskable,
          "a masked pair covers " + std::to_string(fraction) + " of the sentence, above the budget");

  std::vector<std::size_t> prot;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (locked[i]) prot.push_back(i);
  }
  std::vector<MaskPlan> plans;
  plans.reserve(maskable.size() * (maskable.size() - 1) / 2);
  for (std::size_t a = 0; a < maskable.size(); ++a) {
    for (std::size_t b = a + 1; b < maskable.size(); ++b) {
      MaskPlan p;
      p.tokens.assign(tokens.begin(), tokens.end());
      p.protected_positions = prot;
      p.groups.push_back({maskable[a], maskable[b]});
      p.masked_fraction = fraction;
      plans.push_back(std::move(p));
    }
  }
  return plans;
}

std::vector<MaskPlan> sample_mask_combos(std::span<const MaskPlan> plans, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::InvalidArgument, "sample size must be >= 1");
  std::vector<std::size_t> idx(plans.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  const std::size_t take = std::min(n, plans.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<MaskPlan> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(plans[idx[i]]);
  return out;
}

namespace {

// True if `cand` equals the fixed segments of `plan` with 1..3 tokens in
// place of each masked position.
bool matches_plan(std::span<const std::string> cand, std::span<const std::vector<std::string>> segments,
                  std::size_t seg) {
  const auto& fixed = segments[seg];
  if (cand.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), cand.begin())) return false;
  const auto rest = cand.subspan(fixed.size());
  if (seg + 1 == segments.size()) return rest.empty();
  for (std::size_t k = 1; k <= kMaxFillTokens && k <= rest.size(); ++k) {
    if (std::find(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k), kMaskToken) !=
        rest.begin() + static_cast<std::ptrdiff_t>(k)) {
      return false;
    }
    if (matches_plan(rest.subspan(k), segments, seg + 1)) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> fill_masks(const MaskPlan& plan, const InfillScorer& infill, std::size_t n_fill) {
  require(plan.masked_fraction <= kMaxMaskFraction + 1e-12, ErrorKind::InvalidArgument,
          "mask plan exceeds the 15% budget");
  const auto pos = plan.positions();
  std::vector<std::vector<std::string>> segments(1);
  std::vector<std::string> avoid;
  for (std::size_t i = 0; i < plan.tokens.size(); ++i) {
    if (std::binary_search(pos.begin(), pos.end(), i)) {
      avoid.push_back(plan.tokens[i]);
      segments.emplace_back();
    } else {
      segments.back().push_back(plan.tokens[i]);
    }
  }
  const std::string masked = plan.masked_text();
  const std::vector<std::vector<std::string>> avoid_list{avoid};
  const auto fills = infill.infill(std::span(&masked, 1), n_fill, avoid_list);
  require(fills.size() == 1, ErrorKind::ProtocolError, "infill returned the wrong number of lists");

  const std::string original = text::normalize(detokenize(plan.tokens));
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& f : fills.front()) {
    const std::string c = text::normalize(f);
    if (c.empty() || c == original || !seen.insert(c).second) continue;
    const auto toks = tokenize(c);
    if (toks == plan.tokens || !matches_plan(toks, segments, 0)) continue;
    out.push_back(c);
    if (out.size() >= n_fill) break;
  }
  return out;
}

bool passes_filter(double similarity, double coherence_original, double coherence_candidate,
                   const ParaphraseConfig& cfg) {
  if (similarity < cfg.similarity_threshold) return false;
  if (coherence_original >= cfg.coherence_threshold) return coherence_candidate >= cfg.coherence_threshold;
  // Compared with a small slack so that a delta of exactly 0.05 survives
  // floating-point subtraction.
  return std::abs(coherence_candidate - coherence_original) <= cfg.coherence_delta + 1e-12;
}

std::vector<ParaphraseCandidate> filter_candidates(const std::string& original, std::span<const std::string> candidates,
                                                   const SimilarityScorer& similarity,
                                                   const CoherenceScorer& coherence, const ParaphraseConfig& cfg) {
  if (candidates.empty()) return {};
  std::vector<TextPair> pairs;
  pairs.reserve(candidates.size());
  for (const auto& c : candidates) pairs.emplace_back(original, c);
  const auto sims = similarity.similarity(pairs);
  const double coh_orig = coherence(original);
  const auto cohs = coherence.coherence(candidates);
  std::vector<ParaphraseCandidate> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!passes_filter(sims[i], coh_orig, cohs[i], cfg)) continue;
    ParaphraseCandidate c;
    c.text = candidates[i];
    c.similarity = sims[i];
    c.coherence = cohs[i];
    out.push_back(std::move(c));
  }
  return out;
}

ParaphraseCandidate select_best(std::span<const ParaphraseCandidate> survivors) {
  require(!survivors.empty(), ErrorKind::NoSurvivors, "no candidate survived filtering");
  const ParaphraseCandidate* best = &survivors.front();
  for (const auto& c : survivors.subspan(1)) {
    if (c.log_loss > best->log_loss || (c.log_loss == best->log_loss && c.text < best->text)) best = &c;
  }
  return *best;
}

ParaphraseCandidate select_best(std::vector<ParaphraseCandidate> survivors, const LogLossScorer& log_loss) {
  require(!survivors.empty(), ErrorKind::NoSurvivors, "no candidate survived filtering");
  std::vector<std::string> texts;
  texts.reserve(survivors.size());
  for (const auto& c : survivors) texts.push_back(c.text);
  const auto losses = log_loss.log_loss(texts);
  for (std::size_t i = 0; i < survivors.size(); ++i) survivors[i].log_loss = losses[i];
  return select_best(std::span<const ParaphraseCandidate>(survivors));
}

ParaphraseCandidate paraphrase_sentence(const std::string& sentence, const ParaphraseScorers& scorers,
                                        const ParaphraseConfig& cfg, std::uint64_t seed) {
  scorers.validate();
  const auto tokens = tokenize(sentence);
  const auto prot = protect_entities(tokens, cfg.gazetteer);
  const auto plans = enumerate_masks(tokens, prot, cfg.mask_budget);
  const auto chosen = sample_mask_combos(plans, cfg.mask_samples, seed);
  std::vector<std::string> candidates;
  std::vector<std::size_t> plan_of;
  std::unordered_set<std::string> seen;
  for (std::size_t p = 0; p < chosen.size(); ++p) {
    for (auto& c : fill_masks(chosen[p], *scorers.infill, cfg.fills_per_plan)) {
      if (!seen.insert(c).second) continue;
      candidates.push_back(std::move(c));
      plan_of.push_back(p);
    }
  }
  auto survivors = filter_candidates(sentence, candidates, *scorers.similarity, *scorers.coherence, cfg);
  for (auto& s : survivors) {
    const auto it = std::find(candidates.begin(), candidates.end(), s.text);
    s.plan = plan_of[static_cast<std::size_t>(it - candidates.begin())];
  }
  return select_best(std::move(survivors), *scorers.log_loss);
}

std::string paraphrase_text(const std::string& text, const ParaphraseScorers& scorers, const ParaphraseConfig& cfg) {
  const auto sentences = split_sentences(text);
  if (sentences.empty()) return text;
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::string s = sentences[i];
    try {
      s = paraphrase_sentence(sentences[i], scorers, cfg, mix_seed(cfg.seed, i)).text;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoSurvivors && e.kind() != ErrorKind::InsufficientMaskable) throw;
    }
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

std::vector<TrajectoryStep> recursive_paraphrase(const std::string& text, std::size_t iterations,
                                                 const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                                 const DetectFn& detect) {
  require(iterations >= 1, ErrorKind::InvalidArgument, "iterations must be >= 1");
  scorers.validate();
  std::vector<TrajectoryStep> out;
  TrajectoryStep first;
  first.text = text;
  first.coherence = (*scorers.coherence)(text);
  first.detected = detect ? detect(text) : false;
  out.push_back(std::move(first));
  for (std::size_t i = 1; i <= iterations; ++i) {
    ParaphraseConfig step_cfg = cfg;
    step_cfg.seed = mix_seed(cfg.seed, i);
    TrajectoryStep step;
    step.iteration = i;
    step.text = paraphrase_text(out.back().text, scorers, step_cfg);
    step.similarity = (*scorers.similarity)(text, step.text);
    step.coherence = (*scorers.coherence)(step.text);
    step.detected = detect ? detect(step.text) : false;
    out.push_back(std::move(step));
  }
  return out;
}

namespace {

std::vector<TrainPair> pairs_for_question(std::size_t index, const std::string& question, const NgramModel& lm,
                                          const GenerationConfig& generation, const ParaphraseScorers& scorers,
                                          const ParaphraseConfig& cfg) {
  std::vector<TrainPair> out;
  GenerationConfig g = generation;
  g.seed = mix_seed(generation.seed, index);
  const std::string answer = generate(lm, question, g);
  const auto sentences = split_sentences(answer);
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    try {
      const auto best = paraphrase_sentence(sentences[j], scorers, cfg, mix_seed(mix_seed(cfg.seed, index), j));
      TrainPair p;
      p.source = sentences[j];
      p.target = best.text;
      p.log_loss = best.log_loss;
      p.similarity = best.similarity;
      p.coherence_src = (*scorers.coherence)(sentences[j]);
      p.coherence_tgt = best.coherence;
      out.push_back(std::move(p));
    } catch (const Error&) {
      // Unusable sentence; the batch goes on.
    }
  }
  return out;
}

}  // namespace

std::vector<TrainPair> build_trainset(std::span<const std::string> questions, const NgramModel& lm,
                                      const GenerationConfig& generation, const ParaphraseScorers& scorers,
                                      const ParaphraseConfig& cfg) {
  require(!questions.empty(), ErrorKind::InvalidArgument, "no questions given");
  cfg.validate();
  scorers.validate();
  std::vector<std::vector<TrainPair>> per(questions.size());
  const auto n = static_cast<std::ptrdiff_t>(questions.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    slot.run([&] { per[k] = pairs_for_question(k, questions[k], lm, generation, scorers, cfg); });
  }
  slot.rethrow();
  std::vector<TrainPair> out;
  for (auto& v : per) out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  return out;
}

std::vector<TrainPair> build_trainset_serial(std::span<const std::string> questions, const NgramModel& lm,
                                             const GenerationConfig& generation, const ParaphraseScorers& scorers,
                                             const ParaphraseConfig& cfg) {
  require(!questions.empty(), ErrorKind::InvalidArgument, "no questions given");
  cfg.validate();
  scorers.validate();
  std::vector<TrainPair> out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    auto v = pairs_for_question(i, questions[i], lm, generation, scorers, cfg);
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return out;
}

}  // namespace evade
