#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "evade/decoding.hpp"
#include "evade/ngram.hpp"

namespace evade {

/// Next-token distribution stored as explicit "head" entries plus a block of
/// equally weighted "tail" tokens (every id not in the head and not masked).
/// Weights are unnormalized. The head is ordered by weight descending, then
/// id; the tail block sits at position `tail_at` of that order and its
/// tokens are taken in ascending id order. Truncations keep the lowest ids of
/// the tail, which is exactly what the dense tie rule produces.
class CompactDist {
 public:
  struct Entry {
    TokenId id;
    double weight;
  };

  /// Smoothed counts for `context` with `masked` ids removed, then the bias
  /// (if any), then temperature `tau`.
  static CompactDist build(const NgramModel& model, std::span<const TokenId> context,
                           std::span<const TokenId> masked, const LogitBias* bias, double tau);

  double total() const;
  std::size_t support_size() const { return head_.size() + tail_count_; }

  void truncate_top_k(std::size_t k);
  void truncate_nucleus(double p);
  void truncate_typical(double mass);
  void truncate(const GenerationConfig& cfg);

  TokenId argmax() const;
  TokenId sample(double u) const;

  /// Normalized dense copy (vocabulary-sized).
  TokenDistribution to_dense(std::size_t vocab_size) const;

  const std::vector<Entry>& head() const { return head_; }
  std::size_t tail_at() const { return tail_at_; }
  std::size_t tail_count() const { return tail_count_; }
  double tail_weight() const { return tail_weight_; }

  /// Id of the j-th tail token in ascending order.
  TokenId tail_id(std::size_t j) const;

 private:
  std::vector<Entry> head_;
  std::size_t tail_at_ = 0;
  double tail_weight_ = 0.0;
  std::size_t tail_count_ = 0;
  std::vector<TokenId> excluded_;  // sorted ids that never belong to the tail
};

/// KL(p || q) for two compact distributions built over the same context with
/// the same masked set and bias length.
double compact_kl(const CompactDist& p, const CompactDist& q);

}  // namespace evade
