#include "evade/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "evade/error.hpp"
#include "evade/text.hpp"

namespace evade {

void RewardConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(unit(special_char_threshold) && special_char_threshold < 1.0, ErrorKind::Config,
          "special_char_threshold must be in [0, 1)");
  require(repetition_start >= 2 && repetition_max > repetition_start - 1, ErrorKind::Config,
          "repetition_start/repetition_max out of range");
  require(acceptability_threshold > 0.0 && acceptability_threshold <= 1.0, ErrorKind::Config,
          "acceptability_threshold must be in (0, 1]");
  require(dictionary_threshold > 0.0 && dictionary_threshold <= 1.0, ErrorKind::Config,
          "dictionary_threshold must be in (0, 1]");
  require(unit(emoji_ratio_threshold) && emoji_ratio_threshold < 1.0, ErrorKind::Config,
          "emoji_ratio_threshold must be in [0, 1)");
  require(emoji_count_threshold >= 1 && emoji_count_step > 0.0, ErrorKind::Config, "emoji count schedule invalid");
  require(unit(query_overlap_threshold) && query_overlap_threshold < 1.0, ErrorKind::Config,
          "query_overlap_threshold must be in [0, 1)");
  require(special_token_allowance >= 0 && special_token_step > 0.0, ErrorKind::Config,
          "special token schedule invalid");
  require(unit(batch_start_low) && unit(batch_start_high) && batch_start_low < batch_start_high, ErrorKind::Config,
          "batch thresholds need 0 <= low < high <= 1");
  require(unit(unknown_char_base) && unknown_char_step >= 0.0, ErrorKind::Config, "unknown char schedule invalid");
  require(evasion_scale >= 1.0, ErrorKind::Config, "evasion_scale must be >= 1");
}

std::vector<double> RewardBreakdown::penalties() const {
  return {special_chars, repetition,     acceptability, dictionary, emoji_ratio, emoji_count,
          query_repetition, special_tokens, same_start,    number_start, unknown_chars};
}

bool RewardBreakdown::violates() const {
  const auto p = penalties();
  return std::any_of(p.begin(), p.end(), [](double v) { return v < 0.0; });
}

nlohmann::ordered_json RewardBreakdown::to_json() const {
  nlohmann::ordered_json j;
  j["special_chars"] = special_chars;
  j["repetition"] = repetition;
  j["acceptability"] = acceptability;
  j["dictionary"] = dictionary;
  j["emoji_ratio"] = emoji_ratio;
  j["emoji_count"] = emoji_count;
  j["query_repetition"] = query_repetition;
  j["special_tokens"] = special_tokens;
  j["same_start"] = same_start;
  j["number_start"] = number_start;
  j["unknown_chars"] = unknown_chars;
  j["detector"] = detector;
  j["combined"] = combined;
  return j;
}

namespace {

// Linear ramp: 0 at `onset`, -1 at `saturation`, clamped.
double ramp(double value, double onset, double saturation) {
  if (value <= onset) return 0.0;
  return -std::min(1.0, (value - onset) / (saturation - onset));
}

void require_text(std::string_view text) {
  require(!text::normalize(text).empty(), ErrorKind::EmptyText, "penalty needs non-empty text");
}

std::vector<std::string> folded_words(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(s)) {
    if (text::is_word(t)) out.push_back(text::case_fold(t));
  }
  return out;
}

}  // namespace

double penalty_special_chars(std::string_view s, const RewardConfig& cfg) {
  require_text(s);
  std::size_t total = 0;
  std::size_t special = 0;
  for (char32_t c : text::decode_utf8(s)) {
    if (text::is_emoji(c) || text::is_emoji_component(c)) continue;
    ++total;
    if (!(text::is_latin_letter(c) || text::is_digit(c) || text::is_space(c))) ++special;
  }
  if (total == 0) return 0.0;
  const double r = static_cast<double>(special) / static_cast<double>(total);
  return ramp(r, cfg.special_char_threshold, 1.0);
}

double penalty_repetition(std::string_view s, const RewardConfig& cfg) {
  require_text(s);
  std::unordered_map<std::string, int> counts;
  int m = 0;
  for (const auto& w : folded_words(s)) m = std::max(m, ++counts[w]);
  return ramp(m, cfg.repetition_start - 1, cfg.repetition_max);
}

double penalty_acceptability(double score, const RewardConfig& cfg) {
  const double t = cfg.acceptability_threshold;
  const double s = std::clamp(score, 0.0, 1.0);
  return s >= t ? 0.0 : -(t - s) / t;
}

double penalty_dictionary(std::string_view s, const std::unordered_set<std::string>& dictionary,
                          const RewardConfig& cfg) {
  std::size_t total = 0;
  std::size_t known = 0;
  for (const auto& t : tokenize(s)) {
    if (!text::contains_letter(t)) continue;
    ++total;
    if (dictionary.count(text::case_fold(t)) > 0) ++known;
  }
  require(total > 0, ErrorKind::NoWords, "dictionary rule needs at least one word");
  const double d = static_cast<double>(known) / static_cast<double>(total);
  const double t = cfg.dictionary_threshold;
  return d >= t ? 0.0 : -(t - d) / t;
}

double penalty_emoji_ratio(std::string_view s, const RewardConfig& cfg) {
  const auto emojis = static_cast<double>(text::count_emojis(s));
  const auto words = static_cast<double>(folded_words(s).size());
  if (emojis + words == 0.0) return 0.0;
  return ramp(emojis / (emojis + words), cfg.emoji_ratio_threshold, 1.0);
}

double penalty_emoji_count(std::string_view s, const RewardConfig& cfg) {
  const auto n = static_cast<double>(text::count_emojis(s));
  const double over = n - static_cast<double>(cfg.emoji_count_threshold - 1);
  return over <= 0.0 ? 0.0 : -std::min(1.0, cfg.emoji_count_step * over);
}

namespace {

std::string strip_markers(std::string s, const std::vector<std::string>& markers) {
  for (const auto& m : markers) {
    if (m.empty()) continue;
    for (auto pos = s.find(m); pos != std::string::npos; pos = s.find(m, pos)) s.replace(pos, m.size(), " ");
  }
  return s;
}

std::vector<std::string> folded_tokens(std::string_view s) {
  auto toks = tokenize(s);
  for (auto& t : toks) t = text::case_fold(t);
  return toks;
}

std::size_t longest_common_run(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

}  // namespace

double penalty_query_repetition(std::string_view query, std::string_view response, const RewardConfig& cfg) {
  const auto q = folded_tokens(strip_markers(std::string(query), cfg.special_token_markers));
  require(!q.empty(), ErrorKind::EmptyQuery, "query repetition needs a non-empty query");
  const auto r = folded_tokens(response);
  const double o = static_cast<double>(longest_common_run(q, r)) / static_cast<double>(q.size());
  return ramp(o, cfg.query_overlap_threshold, 1.0);
}

double penalty_special_tokens(std::string_view s, const RewardConfig& cfg) {
  std::size_t c = 0;
  for (const auto& m : cfg.special_token_markers) {
    if (m.empty()) continue;
    for (auto pos = s.find(m); pos != std::string_view::npos; pos = s.find(m, pos + m.size())) ++c;
  }
  const double over = static_cast<double>(c) - static_cast<double>(cfg.special_token_allowance);
  return over <= 0.0 ? 0.0 : -std::min(1.0, cfg.special_token_step * over);
}

namespace {

std::vector<double> batch_rule(std::span<const std::string> batch, const std::vector<std::string>& keys,
                               const RewardConfig& cfg) {
  require(batch.size() >= 2, ErrorKind::EmptyBatch, "batch rules need at least two texts");
  std::map<std::string, std::size_t> groups;
  for (const auto& k : keys) {
    if (!k.empty()) ++groups[k];
  }
  std::vector<double> out(batch.size(), 0.0);
  if (groups.empty()) return out;
  std::size_t modal = 0;
  for (const auto& [k, c] : groups) modal = std::max(modal, c);
  const double f = static_cast<double>(modal) / static_cast<double>(batch.size());
  const double p = ramp(f, cfg.batch_start_low, cfg.batch_start_high);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!keys[i].empty() && groups[keys[i]] == modal) out[i] = p;
  }
  return out;
}

}  // namespace

std::vector<double> penalty_batch_same_start(std::span<const std::string> batch, const RewardConfig& cfg) {
  std::vector<std::string> keys;
  for (const auto& t : batch) {
    const auto words = folded_words(t);
    keys.push_back(words.empty() ? std::string() : words.front());
  }
  return batch_rule(batch, keys, cfg);
}

std::vector<double> penalty_batch_number_start(std::span<const std::string> batch, const RewardConfig& cfg) {
  std::vector<std::string> keys;
  for (const auto& t : batch) {
    const auto toks = tokenize(t);
    const bool numeric = !toks.empty() && text::is_digit(text::decode_utf8(toks.front()).front());
    keys.push_back(numeric ? "#" : "");
  }
  return batch_rule(batch, keys, cfg);
}

double penalty_unknown_chars(std::string_view s, const RewardConfig& cfg) {
  std::size_t u = 0;
  for (char32_t c : text::decode_utf8(s)) {
    if (c == 0xFFFD || cfg.unknown_chars.find(c) != std::u32string::npos) ++u;
  }
  if (u == 0) return 0.0;
  return -std::min(1.0, cfg.unknown_char_base + cfg.unknown_char_step * static_cast<double>(u - 1));
}

double detector_reward(double p_human, const RewardConfig& cfg) {
  const double p = std::clamp(p_human, 0.0, 1.0);
  if (!cfg.raw_logit) return 2.0 * p - 1.0;
  if (p >= 1.0) return 1.0;
  if (p <= 0.0) return -1.0;
  return std::clamp(std::log(p / (1.0 - p)), -1.0, 1.0);
}

RewardBreakdown combine(double detector_score, RewardBreakdown b, const RewardConfig& cfg) {
  b.detector = detector_score;
  const auto p = b.penalties();
  const double worst = *std::min_element(p.begin(), p.end());
  b.combined = worst < 0.0 ? worst : std::clamp(detector_score * cfg.evasion_scale, -1.0, 1.0);
  return b;
}

RewardEngine::RewardEngine(RewardConfig cfg, std::shared_ptr<const DetectorScorer> detector,
                           std::shared_ptr<const CoherenceScorer> coherence, std::unordered_set<std::string> dictionary)
    : cfg_(std::move(cfg)),
      detector_(std::move(detector)),
      coherence_(std::move(coherence)),
      dictionary_(std::move(dictionary)) {
  cfg_.validate();
  require(detector_ != nullptr && coherence_ != nullptr, ErrorKind::InvalidArgument,
          "reward engine needs a detector and a coherence scorer");
}

RewardBreakdown RewardEngine::penalties(std::string_view query, std::string_view response, double coherence) const {
  RewardBreakdown b;
  b.special_chars = penalty_special_chars(response, cfg_);
  b.repetition = penalty_repetition(response, cfg_);
  b.acceptability = penalty_acceptability(coherence, cfg_);
  try {
    b.dictionary = penalty_dictionary(response, dictionary_, cfg_);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoWords) throw;
  }
  b.emoji_ratio = penalty_emoji_ratio(response, cfg_);
  b.emoji_count = penalty_emoji_count(response, cfg_);
  try {
    b.query_repetition = penalty_query_repetition(query, response, cfg_);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyQuery) throw;
  }
  b.special_tokens = penalty_special_tokens(response, cfg_);
  b.unknown_chars = penalty_unknown_chars(response, cfg_);
  return b;
}

std::vector<RewardBreakdown> RewardEngine::score_batch(std::span<const std::string> queries,
                                                       std::span<const std::string> responses) const {
  require(queries.size() == responses.size(), ErrorKind::InvalidArgument, "queries and responses differ in length");
  std::vector<RewardBreakdown> out(responses.size());
  std::vector<std::string> present;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (!tokenize(responses[i]).empty()) {
      present.push_back(responses[i]);
      where.push_back(i);
    }
  }
  const auto coherence = present.empty() ? std::vector<double>{} : coherence_->coherence(present);
  const auto p_machine = present.empty() ? std::vector<double>{} : detector_->p_machine(present);
  for (std::size_t k = 0; k < present.size(); ++k) {
    out[where[k]] = penalties(queries[where[k]], present[k], coherence[k]);
  }
  std::vector<double> same(responses.size(), 0.0);
  std::vector<double> number(responses.size(), 0.0);
  if (responses.size() >= 2) {
    same = penalty_batch_same_start(responses, cfg_);
    number = penalty_batch_number_start(responses, cfg_);
  }
  std::vector<double> det(responses.size(), -1.0);
  for (std::size_t k = 0; k < present.size(); ++k) det[where[k]] = detector_reward(1.0 - p_machine[k], cfg_);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    out[i].same_start = same[i];
    out[i].number_start = number[i];
    // An empty rollout is unacceptable by definition.
    if (std::find(where.begin(), where.end(), i) == where.end()) out[i].acceptability = -1.0;
    out[i] = combine(det[i], out[i], cfg_);
  }
  return out;
}

RewardBreakdown RewardEngine::score(std::string_view query, std::string_view response) const {
  const std::string q(query);
  const std::string r(response);
  return score_batch(std::span(&q, 1), std::span(&r, 1)).front();
}

std::unordered_set<std::string> build_dictionary(std::span<const Document> docs) {
  std::unordered_set<std::string> dict;
  for (const auto& d : docs) {
    for (const auto& t : tokenize(d.text())) {
      if (text::contains_letter(t)) dict.insert(text::case_fold(t));
    }
  }
  return dict;
}

}  // namespace evade
