#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evade/corpus.hpp"

namespace evade {

/// Confusion-matrix metrics with machine as the positive class.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Metrics compute_metrics(std::span<const Label> truth, std::span<const Label> predicted);

struct DetectionVerdict {
  double p_machine = 0.0;
  Label label = Label::Human;
  double score = 0.0;  // ln(p_machine / (1 - p_machine))
};

/// Multinomial bag-of-words Naive Bayes over the training vocabulary.
class NaiveBayesModel {
 public:
  static NaiveBayesModel train(std::span<const Document> docs, double alpha, double threshold = 0.5);

  DetectionVerdict predict(std::string_view text) const;
  std::vector<DetectionVerdict> predict_batch(std::span<const std::string> texts) const;
  std::vector<DetectionVerdict> predict_batch_serial(std::span<const std::string> texts) const;

  Metrics evaluate(std::span<const Document> docs) const;

  /// ln P(class)
  double log_prior(Label label) const;
  /// ln P(token | class); tokens outside the feature space return 0.
  double log_likelihood(Label label, std::string_view token) const;

  const Vocabulary& vocab() const noexcept { return *vocab_; }
  /// Feature count: the non-reserved vocabulary size.
  std::size_t feature_count() const noexcept { return vocab_->size() - Vocabulary::kReserved; }
  double alpha() const noexcept { return alpha_; }
  double threshold() const noexcept { return threshold_; }

  /// JSON file holding the vocabulary, priors and log likelihoods.
  void save(const std::filesystem::path& path) const;
  static NaiveBayesModel load(const std::filesystem::path& path);

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  double alpha_ = 1.0;
  double threshold_ = 0.5;
  double log_prior_human_ = 0.0;
  double log_prior_machine_ = 0.0;
  std::vector<double> ll_human_;
  std::vector<double> ll_machine_;
};

}  // namespace evade
