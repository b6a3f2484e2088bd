#include "evade/compact_dist.hpp"

#include <algorithm>
#include <cmath>

#include "evade/error.hpp"

namespace evade {

CompactDist CompactDist::build(const NgramModel& model, std::span<const TokenId> context,
                               std::span<const TokenId> masked, const LogitBias* bias, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::ZeroTemperature, "temperature must be > 0");
  const std::size_t vocab = model.vocab_size();
  const double alpha = model.alpha();
  const double log_alpha = std::log(alpha);
  const NgramModel::ContextView view = model.lookup(context);

  std::vector<TokenId> mask(masked.begin(), masked.end());
  std::sort(mask.begin(), mask.end());
  mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  auto is_masked = [&](TokenId id) { return std::binary_search(mask.begin(), mask.end(), id); };

  const bool biased = bias != nullptr && !bias->bias.empty();
  const std::size_t first = Vocabulary::kReserved;
  const std::size_t bias_len = biased ? std::min(bias->bias.size(), vocab - first) : 0;
  auto bias_of = [&](TokenId id) {
    return (id >= first && id < first + bias_len) ? bias->bias[id - first] : 0.0;
  };

  CompactDist d;
  std::vector<double> log_w;
  d.head_.reserve(view.followers.size() + bias_len + 1);
  log_w.reserve(d.head_.capacity());
  std::vector<char> in_head(bias_len, 0);
  bool eos_in_head = false;
  for (const auto& f : view.followers) {
    if (is_masked(f.token)) continue;
    d.head_.push_back({f.token, 0.0});
    log_w.push_back(std::log(static_cast<double>(f.count) + alpha) + bias_of(f.token));
    if (f.token >= first && f.token < first + bias_len) in_head[f.token - first] = 1;
    if (f.token == Vocabulary::kEos) eos_in_head = true;
  }
  if (biased) {
    // Every biased id and ⟨eos⟩ become explicit so the tail stays uniform and
    // holds only ids above the biased range.
    if (!eos_in_head && !is_masked(Vocabulary::kEos)) {
      d.head_.push_back({Vocabulary::kEos, 0.0});
      log_w.push_back(log_alpha);
    }
    for (std::size_t j = 0; j < bias_len; ++j) {
      const auto id = static_cast<TokenId>(first + j);
      if (in_head[j] || is_masked(id)) continue;
      d.head_.push_back({id, 0.0});
      log_w.push_back(log_alpha + bias->bias[j]);
    }
  }

  d.excluded_ = mask;
  for (const auto& e : d.head_) d.excluded_.push_back(e.id);
  std::sort(d.excluded_.begin(), d.excluded_.end());
  d.excluded_.erase(std::unique(d.excluded_.begin(), d.excluded_.end()), d.excluded_.end());
  d.tail_count_ = vocab - std::min(vocab, d.excluded_.size());

  double max_log = d.tail_count_ > 0 ? log_alpha : -INFINITY;
  for (double lw : log_w) max_log = std::max(max_log, lw);
  require(std::isfinite(max_log), ErrorKind::InvalidArgument, "every token is masked");
  for (std::size_t i = 0; i < d.head_.size(); ++i) d.head_[i].weight = std::exp((log_w[i] - max_log) / tau);
  d.tail_weight_ = d.tail_count_ > 0 ? std::exp((log_alpha - max_log) / tau) : 0.0;

  if (biased) {
    std::sort(d.head_.begin(), d.head_.end(), [](const Entry& a, const Entry& b) {
      return a.weight != b.weight ? a.weight > b.weight : a.id < b.id;
    });
  }
  const double tw = d.tail_weight_;
  d.tail_at_ = static_cast<std::size_t>(
      std::find_if(d.head_.begin(), d.head_.end(), [tw](const Entry& e) { return e.weight < tw; }) - d.head_.begin());
  return d;
}

double CompactDist::total() const {
  double sum = 0.0;
  for (const auto& e : head_) sum += e.weight;
  return sum + tail_weight_ * static_cast<double>(tail_count_);
}

TokenId CompactDist::tail_id(std::size_t j) const {
  std::size_t id = j;
  for (TokenId e : excluded_) {
    if (e <= id) {
      ++id;
    } else {
      break;
    }
  }
  return static_cast<TokenId>(id);
}

namespace {

// Walks the ordered support: head[0..tail_at), tail block, head[tail_at..).
template <typename HeadFn, typename TailFn>
void walk(const std::vector<CompactDist::Entry>& head, std::size_t tail_at, bool has_tail, HeadFn&& on_head,
          TailFn&& on_tail) {
  for (std::size_t i = 0; i <= head.size(); ++i) {
    if (i == tail_at && has_tail) {
      if (!on_tail()) return;
    }
    if (i == head.size()) break;
    if (!on_head(i)) return;
  }
}

}  // namespace

void CompactDist::truncate_top_k(std::size_t k) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  std::vector<Entry> kept;
  std::size_t new_tail_at = 0;
  std::size_t new_tail_count = 0;
  std::size_t remaining = k;
  walk(
      head_, tail_at_, tail_count_ > 0,
      [&](std::size_t i) {
        if (remaining == 0) return false;
        kept.push_back(head_[i]);
        --remaining;
        return true;
      },
      [&]() {
        new_tail_at = kept.size();
        new_tail_count = std::min(tail_count_, remaining);
        remaining -= new_tail_count;
        return remaining > 0;
      });
  if (tail_count_ == 0 || new_tail_count == 0) new_tail_at = kept.size();
  head_ = std::move(kept);
  tail_at_ = std::min(new_tail_at, head_.size());
  tail_count_ = new_tail_count;
}

void CompactDist::truncate_nucleus(double p) {
  require(p > 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "p must be in (0, 1]");
  const double total_w = total();
  const double target = p - 1e-12;
  const double pt = tail_weight_ / total_w;
  std::vector<Entry> kept;
  std::size_t new_tail_at = 0;
  std::size_t new_tail_count = 0;
  double cum = 0.0;
  bool done = false;
  walk(
      head_, tail_at_, tail_count_ > 0,
      [&](std::size_t i) {
        if (done) return false;
        kept.push_back(head_[i]);
        cum += head_[i].weight / total_w;
        done = cum >= target;
        return !done;
      },
      [&]() {
        new_tail_at = kept.size();
        if (!(pt > 0.0)) return true;
        const double need = std::ceil((target - cum) / pt);
        const std::size_t n = need < 1.0 ? 1 : (need >= static_cast<double>(tail_count_) ? tail_count_
                                                                                        : static_cast<std::size_t>(need));
        new_tail_count = n;
        cum += pt * static_cast<double>(n);
        done = n < tail_count_ || cum >= target;
        return !done;
      });
  if (new_tail_count == 0) new_tail_at = kept.size();
  head_ = std::move(kept);
  tail_at_ = std::min(new_tail_at, head_.size());
  tail_count_ = new_tail_count;
}

void CompactDist::truncate_typical(double mass) {
  require(mass > 0.0 && mass <= 1.0, ErrorKind::InvalidArgument, "mass must be in (0, 1]");
  const double total_w = total();
  const double pt = tail_weight_ / total_w;
  double entropy = 0.0;
  for (const auto& e : head_) {
    const double p = e.weight / total_w;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  if (tail_count_ > 0 && pt > 0.0) entropy -= static_cast<double>(tail_count_) * pt * std::log(pt);

  struct Item {
    long long key;
    std::size_t index;  // vocabulary id used for tie-breaking
    std::size_t head_pos;  // head_.size() marks the tail block
  };
  std::vector<Item> items;
  items.reserve(head_.size() + 1);
  for (std::size_t i = 0; i < head_.size(); ++i) {
    const double p = head_[i].weight / total_w;
    if (p <= 0.0) continue;
    items.push_back({std::llround(std::abs(-std::log(p) - entropy) * 1e9), head_[i].id, i});
  }
  if (tail_count_ > 0 && pt > 0.0) {
    items.push_back({std::llround(std::abs(-std::log(pt) - entropy) * 1e9), tail_id(0), head_.size()});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.key != b.key ? a.key < b.key : a.index < b.index; });

  const double target = mass - 1e-12;
  std::vector<char> keep(head_.size(), 0);
  std::size_t new_tail_count = 0;
  double cum = 0.0;
  for (const auto& it : items) {
    if (it.head_pos == head_.size()) {
      const double need = std::ceil((target - cum) / pt);
      const std::size_t n = need < 1.0 ? 1 : (need >= static_cast<double>(tail_count_) ? tail_count_
                                                                                      : static_cast<std::size_t>(need));
      new_tail_count = n;
      cum += pt * static_cast<double>(n);
      if (n < tail_count_) break;
    } else {
      keep[it.head_pos] = 1;
      cum += head_[it.head_pos].weight / total_w;
    }
    if (cum >= target) break;
  }
  std::vector<Entry> kept;
  std::size_t new_tail_at = 0;
  for (std::size_t i = 0; i < head_.size(); ++i) {
    if (i == tail_at_) new_tail_at = kept.size();
    if (keep[i]) kept.push_back(head_[i]);
  }
  if (tail_at_ >= head_.size()) new_tail_at = kept.size();
  head_ = std::move(kept);
  tail_at_ = new_tail_at;
  tail_count_ = new_tail_count;
}

void CompactDist::truncate(const GenerationConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::TopK: truncate_top_k(cfg.top_k); break;
    case Strategy::Nucleus: truncate_nucleus(cfg.top_p); break;
    case Strategy::Typical: truncate_typical(cfg.typical_mass); break;
    case Strategy::Greedy:
    case Strategy::Random: break;
  }
}

TokenId CompactDist::argmax() const {
  if (tail_count_ > 0 && tail_at_ == 0) return tail_id(0);
  require(!head_.empty(), ErrorKind::InvalidArgument, "empty support");
  return head_.front().id;
}

TokenId CompactDist::sample(double u) const {
  const double target = u * total();
  double cum = 0.0;
  TokenId last = 0;
  bool found = false;
  TokenId picked = 0;
  walk(
      head_, tail_at_, tail_count_ > 0,
      [&](std::size_t i) {
        cum += head_[i].weight;
        last = head_[i].id;
        if (target < cum) {
          picked = head_[i].id;
          found = true;
          return false;
        }
        return true;
      },
      [&]() {
        const double block = tail_weight_ * static_cast<double>(tail_count_);
        last = tail_id(tail_count_ - 1);
        if (target < cum + block) {
          auto j = static_cast<std::size_t>((target - cum) / tail_weight_);
          picked = tail_id(std::min(j, tail_count_ - 1));
          found = true;
          return false;
        }
        cum += block;
        return true;
      });
  return found ? picked : last;
}

TokenDistribution CompactDist::to_dense(std::size_t vocab_size) const {
  TokenDistribution out(vocab_size, 0.0);
  const double total_w = total();
  for (const auto& e : head_) out[e.id] = e.weight / total_w;
  for (std::size_t j = 0; j < tail_count_; ++j) out[tail_id(j)] = tail_weight_ / total_w;
  return out;
}

double compact_kl(const CompactDist& p, const CompactDist& q) {
  require(p.head().size() == q.head().size() && p.tail_count() == q.tail_count(), ErrorKind::InvalidArgument,
          "compact_kl needs distributions over the same support layout");
  const double zp = p.total();
  const double zq = q.total();
  auto by_id = [](std::vector<CompactDist::Entry> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return v;
  };
  const auto ph = by_id(p.head());
  const auto qh = by_id(q.head());
  double kl = 0.0;
  for (std::size_t i = 0; i < ph.size(); ++i) {
    require(ph[i].id == qh[i].id, ErrorKind::InvalidArgument, "compact_kl support mismatch");
    const double a = ph[i].weight / zp;
    const double b = qh[i].weight / zq;
    if (a > 0.0) kl += a * std::log(a / b);
  }
  if (p.tail_count() > 0) {
    const double a = p.tail_weight() / zp;
    const double b = q.tail_weight() / zq;
    if (a > 0.0) kl += static_cast<double>(p.tail_count()) * a * std::log(a / b);
  }
  return std::max(0.0, kl);
}

}  // namespace evade
