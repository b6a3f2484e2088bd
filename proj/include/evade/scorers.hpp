#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evade/corpus.hpp"
#include "evade/naive_bayes.hpp"
#include "evade/ngram.hpp"

namespace evade {

enum class ScorerTask { Detect, Similarity, Coherence, LogLoss, Infill };
enum class Backend { Local, Remote };

std::string_view to_string(ScorerTask t);
ScorerTask parse_task(std::string_view s);
std::string_view to_string(Backend b);
Backend parse_backend(std::string_view s);

struct ScorerBinding {
  ScorerTask task = ScorerTask::Detect;
  Backend backend = Backend::Local;
  std::string endpoint;
  int timeout_ms = 5000;

  void validate() const;
};

using TextPair = std::pair<std::string, std::string>;

/// P(machine) per text, each in [0, 1].
class DetectorScorer {
 public:
  virtual ~DetectorScorer() = default;
  virtual std::vector<double> p_machine(std::span<const std::string> texts) const = 0;
};

/// Similarity per pair, each in [-1, 1].
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual std::vector<double> similarity(std::span<const TextPair> pairs) const = 0;
  double operator()(const std::string& a, const std::string& b) const;
};

/// Acceptability per text, each in [0, 1].
class CoherenceScorer {
 public:
  virtual ~CoherenceScorer() = default;
  virtual std::vector<double> coherence(std::span<const std::string> texts) const = 0;
  double operator()(const std::string& text) const;
};

/// Mean per-token negative log likelihood per text.
class LogLossScorer {
 public:
  virtual ~LogLossScorer() = default;
  virtual std::vector<double> log_loss(std::span<const std::string> texts) const = 0;
};

/// Filled-in versions of texts containing ⟨mask⟩ placeholders.
class InfillScorer {
 public:
  virtual ~InfillScorer() = default;
  /// `avoid[i]` optionally lists, per placeholder of masked[i], a token the
  /// fill should not reuse. Remote backends ignore it.
  virtual std::vector<std::vector<std::string>> infill(std::span<const std::string> masked, std::size_t n_candidates,
                                                       std::span<const std::vector<std::string>> avoid = {}) const = 0;
};

// ------------------------------------------------------------ local backends

class NaiveBayesDetector : public DetectorScorer {
 public:
  explicit NaiveBayesDetector(std::shared_ptr<const NaiveBayesModel> model) : model_(std::move(model)) {}
  std::vector<double> p_machine(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const NaiveBayesModel> model_;
};

/// Cosine of L2-normalized TF-IDF vectors over unigrams and bigrams. IDF
/// comes from the reference corpus; features never seen there weigh 0.
class TfidfSimilarity : public SimilarityScorer {
 public:
  explicit TfidfSimilarity(std::span<const std::string> reference);
  std::vector<double> similarity(std::span<const TextPair> pairs) const override;
  double score(std::string_view a, std::string_view b) const;
  /// Feature weight (0 for unknown features); bigrams are "a b".
  double idf(const std::string& feature) const;

 private:
  std::unordered_map<std::string, double> idf_;
};

/// logistic(sharpness * z), z = per-token log probability standardized by the
/// reference corpus mean and standard deviation. A proxy for acceptability.
class LmCoherence : public CoherenceScorer {
 public:
  LmCoherence(std::shared_ptr<const NgramModel> lm, std::span<const std::string> reference, double sharpness);
  std::vector<double> coherence(std::span<const std::string> texts) const override;
  double score(std::string_view text) const;
  double reference_mean() const noexcept { return mean_; }
  double reference_sd() const noexcept { return sd_; }

 private:
  std::shared_ptr<const NgramModel> lm_;
  double sharpness_;
  double mean_ = 0.0;
  double sd_ = 1.0;
};

class LmLogLoss : public LogLossScorer {
 public:
  explicit LmLogLoss(std::shared_ptr<const NgramModel> lm) : lm_(std::move(lm)) {}
  std::vector<double> log_loss(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const NgramModel> lm_;
};

/// Left-to-right beam over placeholder positions. Each placeholder proposes
/// its most probable next tokens given the left context; beams are ranked by
/// the log probability of the fill plus the tokens that follow it.
class LmInfill : public InfillScorer {
 public:
  explicit LmInfill(std::shared_ptr<const NgramModel> lm, std::size_t proposals_per_slot = 40)
      : lm_(std::move(lm)), proposals_(proposals_per_slot) {}
  std::vector<std::vector<std::string>> infill(std::span<const std::string> masked, std::size_t n_candidates,
                                               std::span<const std::vector<std::string>> avoid = {}) const override;
  std::vector<std::string> fill_one(std::string_view masked, std::size_t n_candidates,
                                    std::span<const std::string> avoid) const;

 private:
  std::shared_ptr<const NgramModel> lm_;
  std::size_t proposals_;
};

// ----------------------------------------------------------- remote backends

/// JSON-over-HTTP client for POST /score. Each call opens its own
/// connection, so one client may be shared across threads.
class RemoteScorerClient {
 public:
  explicit RemoteScorerClient(ScorerBinding binding);

  std::vector<double> scores(ScorerTask task, std::span<const std::string> texts) const;
  std::vector<double> pair_scores(std::span<const TextPair> pairs) const;
  std::vector<std::vector<std::string>> infill(std::span<const std::string> masked, std::size_t n_candidates) const;

  const ScorerBinding& binding() const noexcept { return binding_; }

  /// Request body for the wire protocol (exposed for conformance tests).
  static std::string request_body(const std::string& id, ScorerTask task, std::span<const std::string> texts,
                                  std::span<const TextPair> pairs, std::size_t n_candidates);

 private:
  std::string post(const std::string& body) const;
  std::string next_id() const;

  ScorerBinding binding_;
  std::string host_;
  int port_ = 80;
  std::string path_ = "/score";
};

class RemoteDetector : public DetectorScorer {
 public:
  explicit RemoteDetector(std::shared_ptr<const RemoteScorerClient> client) : client_(std::move(client)) {}
  std::vector<double> p_machine(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const RemoteScorerClient> client_;
};

class RemoteSimilarity : public SimilarityScorer {
 public:
  explicit RemoteSimilarity(std::shared_ptr<const RemoteScorerClient> client) : client_(std::move(client)) {}
  std::vector<double> similarity(std::span<const TextPair> pairs) const override;

 private:
  std::shared_ptr<const RemoteScorerClient> client_;
};

class RemoteCoherence : public CoherenceScorer {
 public:
  explicit RemoteCoherence(std::shared_ptr<const RemoteScorerClient> client) : client_(std::move(client)) {}
  std::vector<double> coherence(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const RemoteScorerClient> client_;
};

class RemoteLogLoss : public LogLossScorer {
 public:
  explicit RemoteLogLoss(std::shared_ptr<const RemoteScorerClient> client) : client_(std::move(client)) {}
  std::vector<double> log_loss(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const RemoteScorerClient> client_;
};

class RemoteInfill : public InfillScorer {
 public:
  explicit RemoteInfill(std::shared_ptr<const RemoteScorerClient> client) : client_(std::move(client)) {}
  std::vector<std::vector<std::string>> infill(std::span<const std::string> masked, std::size_t n_candidates,
                                               std::span<const std::vector<std::string>> avoid = {}) const override;

 private:
  std::shared_ptr<const RemoteScorerClient> client_;
};

}  // namespace evade
