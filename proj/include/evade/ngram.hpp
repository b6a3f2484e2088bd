#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evade/corpus.hpp"

namespace evade {

/// Word-level n-gram model with add-alpha smoothing. Distributions come from
/// the longest context suffix that was observed in training; unseen contexts
/// fall back to progressively shorter suffixes down to the unigram table.
class NgramModel {
 public:
  struct Follower {
    TokenId token;
    std::uint32_t count;
  };

  /// Counts observed after one context, followers sorted by count descending
  /// then token id ascending.
  struct ContextView {
    std::span<const Follower> followers;
    std::uint64_t total = 0;
    std::size_t length = 0;  // length of the matched context suffix
  };

  static NgramModel train(std::span<const Document> docs, int order, double alpha, std::uint64_t min_count = 1);
  static NgramModel train(std::span<const Document> docs, Vocabulary vocab, int order, double alpha);

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocab_ptr() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_->size(); }

  ContextView lookup(std::span<const TokenId> context) const;

  /// Dense smoothed distribution over the whole vocabulary.
  std::vector<double> next_distribution(std::span<const TokenId> context) const;

  double prob(std::span<const TokenId> context, TokenId token) const;
  double log_prob(std::span<const TokenId> context, TokenId token) const;

  std::vector<TokenId> encode(std::string_view text) const;

  /// Sum of ln P over `tokens`, scored from ⟨bos⟩; ⟨eos⟩ is not scored.
  double sentence_log_prob(std::span<const TokenId> tokens) const;

  struct Score {
    double log_prob = 0.0;  // total, nats
    std::size_t tokens = 0;
  };
  /// Scores each sentence of `text` independently.
  Score score(std::string_view text) const;

  /// Mean per-token negative log probability in nats.
  double log_loss(std::string_view text) const;

  void save(const std::filesystem::path& path) const;
  static NgramModel load(const std::filesystem::path& path);

 private:
  struct Node {
    std::uint64_t total = 0;
    std::vector<Follower> followers;
  };

  NgramModel(std::shared_ptr<const Vocabulary> vocab, int order, double alpha);
  void add_count(std::span<const TokenId> context, TokenId token, std::uint64_t count);
  void finalize();
  std::uint64_t count_of(std::span<const TokenId> context, TokenId token) const;

  std::shared_ptr<const Vocabulary> vocab_;
  int order_;
  double alpha_;
  std::unordered_map<std::string, Node> contexts_;
  std::unordered_map<std::string, std::uint32_t> ngrams_;
};

}  // namespace evade
