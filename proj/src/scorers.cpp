#include "evade/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "evade/error.hpp"
#include "evade/text.hpp"

namespace evade {

std::string_view to_string(ScorerTask t) {
  switch (t) {
    case ScorerTask::Detect: return "detect";
    case ScorerTask::Similarity: return "similarity";
    case ScorerTask::Coherence: return "coherence";
    case ScorerTask::LogLoss: return "logloss";
    case ScorerTask::Infill: return "infill";
  }
  return "detect";
}

ScorerTask parse_task(std::string_view s) {
  if (s == "detect") return ScorerTask::Detect;
  if (s == "similarity") return ScorerTask::Similarity;
  if (s == "coherence") return ScorerTask::Coherence;
  if (s == "logloss") return ScorerTask::LogLoss;
  if (s == "infill") return ScorerTask::Infill;
  fail(ErrorKind::InvalidArgument, "unknown scorer task '" + std::string(s) + "'");
}

std::string_view to_string(Backend b) { return b == Backend::Local ? "local" : "remote"; }

Backend parse_backend(std::string_view s) {
  if (s == "local") return Backend::Local;
  if (s == "remote") return Backend::Remote;
  fail(ErrorKind::InvalidArgument, "unknown scorer backend '" + std::string(s) + "'");
}

void ScorerBinding::validate() const {
  require(timeout_ms > 0, ErrorKind::InvalidArgument, "timeout_ms must be > 0");
  require(backend == Backend::Local || !endpoint.empty(), ErrorKind::InvalidArgument,
          "remote scorer binding needs an endpoint");
}

double SimilarityScorer::operator()(const std::string& a, const std::string& b) const {
  const TextPair pair{a, b};
  return similarity(std::span(&pair, 1)).front();
}

double CoherenceScorer::operator()(const std::string& text) const {
  return coherence(std::span(&text, 1)).front();
}

// ------------------------------------------------------------------ detector

std::vector<double> NaiveBayesDetector::p_machine(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& v : model_->predict_batch_serial(texts)) out.push_back(v.p_machine);
  return out;
}

// ---------------------------------------------------------------- similarity

namespace {

std::vector<std::string> folded_tokens(std::string_view s) {
  auto toks = tokenize(s);
  for (auto& t : toks) t = text::case_fold(t);
  return toks;
}

std::vector<std::string> features_of(const std::vector<std::string>& toks) {
  std::vector<std::string> f = toks;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) f.push_back(toks[i] + " " + toks[i + 1]);
  return f;
}

}  // namespace

TfidfSimilarity::TfidfSimilarity(std::span<const std::string> reference) {
  require(!reference.empty(), ErrorKind::EmptyCorpus, "similarity needs a reference corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : reference) {
    const auto feats = features_of(folded_tokens(doc));
    const std::unordered_set<std::string> uniq(feats.begin(), feats.end());
    for (const auto& f : uniq) ++df[f];
  }
  const auto n = static_cast<double>(reference.size());
  for (const auto& [f, d] : df) idf_[f] = std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0;
}

double TfidfSimilarity::idf(const std::string& feature) const {
  auto it = idf_.find(feature);
  return it == idf_.end() ? 0.0 : it->second;
}

double TfidfSimilarity::score(std::string_view a, std::string_view b) const {
  const auto ta = folded_tokens(a);
  const auto tb = folded_tokens(b);
  require(!ta.empty() && !tb.empty(), ErrorKind::EmptyText, "similarity needs two non-empty texts");
  auto vectorize = [&](const std::vector<std::string>& toks) {
    std::unordered_map<std::string, double> v;
    for (const auto& f : features_of(toks)) {
      const double w = idf(f);
      if (w > 0.0) v[f] += w;
    }
    return v;
  };
  const auto va = vectorize(ta);
  const auto vb = vectorize(tb);
  double na = 0.0;
  double nb = 0.0;
  double dot = 0.0;
  for (const auto& [f, w] : va) {
    na += w * w;
    if (auto it = vb.find(f); it != vb.end()) dot += w * it->second;
  }
  for (const auto& [f, w] : vb) nb += w * w;
  if (na == 0.0 || nb == 0.0) return ta == tb ? 1.0 : 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<double> TfidfSimilarity::similarity(std::span<const TextPair> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(score(a, b));
  return out;
}

// ----------------------------------------------------------------- coherence

namespace {

double per_token_log_prob(const NgramModel& lm, std::string_view text) {
  const auto s = lm.score(text);
  require(s.tokens > 0, ErrorKind::EmptyText, "cannot score empty text");
  return s.log_prob / static_cast<double>(s.tokens);
}

}  // namespace

LmCoherence::LmCoherence(std::shared_ptr<const NgramModel> lm, std::span<const std::string> reference,
                         double sharpness)
    : lm_(std::move(lm)), sharpness_(sharpness) {
  require(sharpness > 0.0, ErrorKind::InvalidArgument, "coherence sharpness must be > 0");
  std::vector<double> values;
  for (const auto& r : reference) {
    if (!tokenize(r).empty()) values.push_back(per_token_log_prob(*lm_, r));
  }
  require(values.size() >= 2, ErrorKind::EmptyCorpus, "coherence needs at least two reference texts");
  double sum = 0.0;
  for (double v : values) sum += v;
  mean_ = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean_) * (v - mean_);
  sd_ = std::max(std::sqrt(ss / static_cast<double>(values.size() - 1)), 1e-6);
}

double LmCoherence::score(std::string_view text) const {
  const double z = (per_token_log_prob(*lm_, text) - mean_) / sd_;
  return 1.0 / (1.0 + std::exp(-sharpness_ * z));
}

std::vector<double> LmCoherence::coherence(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score(t));
  return out;
}

std::vector<double> LmLogLoss::log_loss(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(lm_->log_loss(t));
  return out;
}

// -------------------------------------------------------------------- infill

std::vector<std::string> LmInfill::fill_one(std::string_view masked, std::size_t n_candidates,
                                            std::span<const std::string> avoid) const {
  const auto toks = tokenize(masked);
  const Vocabulary& vocab = lm_->vocab();
  struct Beam {
    std::vector<TokenId> ids;
    double score = 0.0;
  };
  const std::size_t width = std::max<std::size_t>(2 * n_candidates, 10);
  std::vector<Beam> beams(1);
  beams[0].ids.push_back(Vocabulary::kBos);
  std::size_t slot = 0;
  const auto by_score = [](const Beam& a, const Beam& b) { return a.score > b.score; };
  std::vector<TokenId> proposals;
  for (const auto& tok : toks) {
    if (tok != kMaskToken) {
      const TokenId id = vocab.id(tok);
      for (auto& b : beams) {
        b.score += lm_->log_prob(b.ids, id);
        b.ids.push_back(id);
      }
      continue;
    }
    std::stable_sort(beams.begin(), beams.end(), by_score);
    if (beams.size() > width) beams.resize(width);
    constexpr TokenId kNone = std::numeric_limits<TokenId>::max();
    const TokenId banned = slot < avoid.size() ? vocab.find(avoid[slot]).value_or(kNone) : kNone;
    std::vector<Beam> next;
    for (const auto& b : beams) {
      proposals.clear();
      auto collect = [&](std::span<const NgramModel::Follower> followers) {
        for (const auto& f : followers) {
          if (proposals.size() >= proposals_) break;
          if (vocab.is_reserved(f.token) || f.token == banned) continue;
          if (std::find(proposals.begin(), proposals.end(), f.token) == proposals.end()) proposals.push_back(f.token);
        }
      };
      collect(lm_->lookup(b.ids).followers);
      if (proposals.size() < proposals_) collect(lm_->lookup({}).followers);
      for (TokenId p : proposals) {
        Beam nb = b;
        nb.score += lm_->log_prob(b.ids, p);
        nb.ids.push_back(p);
        next.push_back(std::move(nb));
      }
    }
    beams = std::move(next);
    ++slot;
  }
  std::stable_sort(beams.begin(), beams.end(), by_score);
  std::vector<std::string> out;
  for (const auto& b : beams) {
    if (out.size() >= n_candidates) break;
    std::vector<std::string> words;
    for (std::size_t i = 1; i < b.ids.size(); ++i) words.push_back(vocab.token(b.ids[i]));
    // Fixed tokens outside the vocabulary must come back verbatim, not as ⟨unk⟩.
    std::size_t k = 0;
    for (std::size_t i = 0; i < toks.size(); ++i, ++k) {
      if (toks[i] != kMaskToken) words[k] = toks[i];
    }
    out.push_back(detokenize(words));
  }
  return out;
}

std::vector<std::vector<std::string>> LmInfill::infill(std::span<const std::string> masked, std::size_t n_candidates,
                                                       std::span<const std::vector<std::string>> avoid) const {
  std::vector<std::vector<std::string>> out;
  out.reserve(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) {
    const std::span<const std::string> a = i < avoid.size() ? std::span<const std::string>(avoid[i])
                                                            : std::span<const std::string>{};
    out.push_back(fill_one(masked[i], n_candidates, a));
  }
  return out;
}

}  // namespace evade
